/**
 * Batch mode: the same request/reply records as the stdio stream, exchanged
 * through requests.jsonl / results.jsonl files instead of pipes.
 */
import fs from 'fs';
import path from 'path';
import { handleLine, Backend } from './protocol';

export const REQUESTS_FILE = 'requests.jsonl';
export const RESULTS_FILE = 'results.jsonl';

export function runBatch(backend: Backend, dir: string): number {
  const requestsPath = path.join(dir, REQUESTS_FILE);
  const lines = fs.readFileSync(requestsPath, 'utf8').split('\n');
  const replies: string[] = [];
  for (const line of lines) {
    const reply = handleLine(backend, line);
    if (reply !== null) {
      replies.push(JSON.stringify(reply));
    }
  }
  const body = replies.join('\n') + (replies.length ? '\n' : '');
  fs.writeFileSync(path.join(dir, RESULTS_FILE), body);
  return replies.length;
}
