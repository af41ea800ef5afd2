/**
 * Wire protocol: newline-delimited JSON over stdin/stdout.
 *
 * Handshake:  {"op":"hello","version":1,"task":"detect"|"classify"}
 *         ->  {"op":"hello","version":1,"labels":[...]}
 * Detection:  {"op":"detect","id":N,"image":K}
 *         ->  {"op":"result","id":N,"detections":[{"box":[..],"score":S,"label":L},..]}
 * Classify:   {"op":"classify","id":N,"image":K}
 *         ->  {"op":"result","id":N,"probs":{"healthy":..,"infested":..,"unknown":..}}
 * Failures:   {"op":"error","id":N,"message":..}; the process keeps serving.
 */
import { createInterface } from 'readline';
import type { Readable, Writable } from 'stream';
import type { DetectionRecord } from './manifest';

export const PROTOCOL_VERSION = 1;

/** Anything that can answer detect/classify requests for known image keys. */
export interface Backend {
  labels: string[];
  detect(image: string): DetectionRecord[] | null;
  classify(image: string): Record<string, number> | null;
}

interface RequestMessage {
  op?: string;
  id?: number;
  version?: number;
  task?: string;
  image?: string;
}

export type ReplyMessage =
  | { op: 'hello'; version: number; labels: string[] }
  | { op: 'result'; id: number | null; detections: DetectionRecord[] }
  | { op: 'result'; id: number | null; probs: Record<string, number> }
  | { op: 'error'; id: number | null; message: string };

export function handleMessage(backend: Backend, msg: RequestMessage): ReplyMessage {
  const id = typeof msg.id === 'number' ? msg.id : null;

  if (msg.op === 'hello') {
    if (msg.version !== PROTOCOL_VERSION) {
      return { op: 'error', id, message: `unsupported protocol version ${msg.version}` };
    }
    return { op: 'hello', version: PROTOCOL_VERSION, labels: backend.labels };
  }

  if (msg.op === 'detect') {
    if (typeof msg.image !== 'string') {
      return { op: 'error', id, message: 'detect request missing image' };
    }
    const detections = backend.detect(msg.image);
    if (detections === null) {
      return { op: 'error', id, message: `unknown image key ${msg.image}` };
    }
    return { op: 'result', id, detections };
  }

  if (msg.op === 'classify') {
    if (typeof msg.image !== 'string') {
      return { op: 'error', id, message: 'classify request missing image' };
    }
    const probs = backend.classify(msg.image);
    if (probs === null) {
      return { op: 'error', id, message: `unknown image key ${msg.image}` };
    }
    return { op: 'result', id, probs };
  }

  return { op: 'error', id, message: `unknown op ${JSON.stringify(msg.op)}` };
}

export function handleLine(backend: Backend, line: string): ReplyMessage | null {
  const trimmed = line.trim();
  if (trimmed === '') return null;
  let msg: RequestMessage;
  try {
    msg = JSON.parse(trimmed);
  } catch {
    return { op: 'error', id: null, message: 'request is not valid JSON' };
  }
  if (typeof msg !== 'object' || msg === null) {
    return { op: 'error', id: null, message: 'request must be a JSON object' };
  }
  return handleMessage(backend, msg);
}

/** Serve the protocol until the input stream closes. One line in, one line out. */
export function serve(backend: Backend, input: Readable, output: Writable): Promise<void> {
  return new Promise((resolve) => {
    const rl = createInterface({ input, terminal: false });
    rl.on('line', (line) => {
      const reply = handleLine(backend, line);
      if (reply !== null) {
        output.write(JSON.stringify(reply) + '\n');
      }
    });
    rl.on('close', resolve);
  });
}
