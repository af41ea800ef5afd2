/**
 * Command-mode backend: plugs in any external detector/classifier.
 *
 * The wrapped command is run once per request with the image key as its only
 * argument and must print a single JSON line: either
 *   {"detections":[{"box":[x0,y0,x1,y1],"score":S,"label":L},...]}
 * or
 *   {"probs":{"healthy":p,"infested":p,"unknown":p}}
 *
 * This mode is best-effort glue for real models; it trades the bit-exact
 * determinism of replay mode for convenience and is not part of the
 * conformance guarantees.
 */
import { spawnSync } from 'child_process';
import type { DetectionRecord } from './manifest';
import type { Backend } from './protocol';

export class CommandBackend implements Backend {
  readonly labels: string[];
  private readonly command: string[];

  constructor(command: string[], labels: string[] = ['palm']) {
    if (command.length === 0) {
      throw new Error('command mode needs a command to run');
    }
    this.command = command;
    this.labels = labels;
  }

  private run(image: string): Record<string, unknown> | null {
    const res = spawnSync(this.command[0], [...this.command.slice(1), image], {
      encoding: 'utf8',
      timeout: 120_000,
    });
    if (res.error || res.status !== 0) return null;
    try {
      return JSON.parse(res.stdout.trim().split('\n').pop() ?? '');
    } catch {
      return null;
    }
  }

  detect(image: string): DetectionRecord[] | null {
    const out = this.run(image);
    if (out === null || !Array.isArray(out.detections)) return null;
    return out.detections as DetectionRecord[];
  }

  classify(image: string): Record<string, number> | null {
    const out = this.run(image);
    if (out === null || typeof out.probs !== 'object' || out.probs === null) return null;
    return out.probs as Record<string, number>;
  }
}
