import { spawnSync } from 'child_process';
import fs from 'fs';
import os from 'os';
import path from 'path';
import { PassThrough } from 'stream';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';
import { serve } from '../src/protocol';
import { ReplayBackend } from '../src/replay';
import { runBatch } from '../src/batch';
import { ReplayManifest } from '../src/manifest';

const MANIFEST: ReplayManifest = {
  labels: ['palm'],
  detections: {
    'tile/20/1/2': [{ box: [10, 10, 24, 24], score: 0.91, label: 'palm' }],
  },
  classifications: {
    'crown/p1/0.000000/0.00,0.00,1.00,1.00': { healthy: 1, infested: 0, unknown: 0 },
  },
};

async function roundtrip(lines: string[]): Promise<string[]> {
  const input = new PassThrough();
  const output = new PassThrough();
  const done = serve(new ReplayBackend(MANIFEST), input, output);
  for (const line of lines) input.write(line + '\n');
  input.end();
  await done;
  const body = output.read()?.toString() ?? '';
  return body.split('\n').filter((l: string) => l !== '');
}

describe('stdio stream serving', () => {
  it('one reply line per request line, ids echoed in order', async () => {
    const replies = await roundtrip([
      JSON.stringify({ op: 'hello', version: 1, task: 'detect' }),
      JSON.stringify({ op: 'detect', id: 1, image: 'tile/20/1/2' }),
      JSON.stringify({ op: 'detect', id: 2, image: 'missing' }),
      JSON.stringify({ op: 'detect', id: 3, image: 'tile/20/1/2' }),
    ]);
    expect(replies).toHaveLength(4);
    const parsed = replies.map((l) => JSON.parse(l));
    expect(parsed[0].op).toBe('hello');
    expect(parsed.slice(1).map((m) => m.id)).toEqual([1, 2, 3]);
    expect(parsed.slice(1).map((m) => m.op)).toEqual(['result', 'error', 'result']);
  });

  it('every reply line parses as standalone JSON (no partial lines)', async () => {
    const replies = await roundtrip(
      Array.from({ length: 50 }, (_, i) =>
        JSON.stringify({ op: 'detect', id: i, image: 'tile/20/1/2' }),
      ),
    );
    expect(replies).toHaveLength(50);
    for (const line of replies) {
      expect(() => JSON.parse(line)).not.toThrow();
    }
  });

  it('identical request streams give byte-identical output', async () => {
    const lines = [
      JSON.stringify({ op: 'hello', version: 1, task: 'classify' }),
      JSON.stringify({ op: 'classify', id: 1, image: 'crown/p1/0.000000/0.00,0.00,1.00,1.00' }),
    ];
    expect(await roundtrip(lines)).toEqual(await roundtrip(lines));
  });
});

describe('batch mode', () => {
  let dir: string;

  beforeAll(() => {
    dir = fs.mkdtempSync(path.join(os.tmpdir(), 'backend-batch-'));
  });

  afterAll(() => {
    fs.rmSync(dir, { recursive: true, force: true });
  });

  it('writes one result line per request line', () => {
    const requests = [
      JSON.stringify({ op: 'detect', id: 1, image: 'tile/20/1/2' }),
      JSON.stringify({ op: 'detect', id: 2, image: 'missing' }),
    ].join('\n');
    fs.writeFileSync(path.join(dir, 'requests.jsonl'), requests + '\n');
    const n = runBatch(new ReplayBackend(MANIFEST), dir);
    expect(n).toBe(2);
    const results = fs
      .readFileSync(path.join(dir, 'results.jsonl'), 'utf8')
      .split('\n')
      .filter((l) => l !== '')
      .map((l) => JSON.parse(l));
    expect(results.map((m) => m.op)).toEqual(['result', 'error']);
    expect(results.map((m) => m.id)).toEqual([1, 2]);
  });
});

describe('compiled entry point', () => {
  const dist = path.join(__dirname, '..', 'dist', 'main.js');

  it.skipIf(!fs.existsSync(dist))('serves the protocol as a subprocess', () => {
    const manifestPath = path.join(os.tmpdir(), `backend-manifest-${process.pid}.json`);
    fs.writeFileSync(manifestPath, JSON.stringify(MANIFEST));
    const stdin =
      JSON.stringify({ op: 'hello', version: 1, task: 'detect' }) +
      '\n' +
      JSON.stringify({ op: 'detect', id: 1, image: 'tile/20/1/2' }) +
      '\n';
    const res = spawnSync('node', [dist, '--mode', 'replay', '--manifest', manifestPath], {
      input: stdin,
      encoding: 'utf8',
    });
    fs.unlinkSync(manifestPath);
    expect(res.status).toBe(0);
    const lines = res.stdout.split('\n').filter((l) => l !== '');
    expect(lines).toHaveLength(2);
    expect(JSON.parse(lines[0])).toEqual({ op: 'hello', version: 1, labels: ['palm'] });
    expect(JSON.parse(lines[1]).detections).toHaveLength(1);
  });

  it.skipIf(!fs.existsSync(dist))('exits non-zero on a missing manifest', () => {
    const res = spawnSync('node', [dist, '--mode', 'replay', '--manifest', '/nonexistent.json'], {
      input: '',
      encoding: 'utf8',
    });
    expect(res.status).not.toBe(0);
  });
});
