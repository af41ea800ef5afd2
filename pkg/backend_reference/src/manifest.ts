/**
 * Replay manifests: canned detections and classification probabilities keyed
 * by image reference. A manifest is the complete answer sheet for a backend
 * run, so replay output is a pure function of (manifest, request stream).
 */
import fs from 'fs';

export interface DetectionRecord {
  box: [number, number, number, number];
  score: number;
  label: string;
}

export interface ReplayManifest {
  labels: string[];
  detections: Record<string, DetectionRecord[]>;
  classifications: Record<string, Record<string, number>>;
}

export class ManifestError extends Error {}

const PROB_SUM_TOLERANCE = 1e-6;

export function validateManifest(doc: unknown): ReplayManifest {
  if (typeof doc !== 'object' || doc === null || Array.isArray(doc)) {
    throw new ManifestError('manifest must be a JSON object');
  }
  const m = doc as Partial<ReplayManifest>;
  const labels = m.labels ?? [];
  if (!Array.isArray(labels) || labels.some((l) => typeof l !== 'string')) {
    throw new ManifestError('manifest labels must be an array of strings');
  }
  const detections = m.detections ?? {};
  const classifications = m.classifications ?? {};

  for (const [key, dets] of Object.entries(detections)) {
    if (!Array.isArray(dets)) {
      throw new ManifestError(`detections for ${key} must be an array`);
    }
    for (const d of dets) {
      if (!Array.isArray(d.box) || d.box.length !== 4 || d.box.some((v) => typeof v !== 'number')) {
        throw new ManifestError(`detection for ${key} has a malformed box`);
      }
      if (typeof d.score !== 'number' || d.score < 0 || d.score > 1) {
        throw new ManifestError(`detection for ${key} has score outside [0, 1]`);
      }
      if (typeof d.label !== 'string') {
        throw new ManifestError(`detection for ${key} is missing a label`);
      }
    }
  }

  for (const [key, probs] of Object.entries(classifications)) {
    if (typeof probs !== 'object' || probs === null) {
      throw new ManifestError(`classification for ${key} must be an object`);
    }
    const values = Object.values(probs);
    if (values.some((v) => typeof v !== 'number' || v < 0)) {
      throw new ManifestError(`classification for ${key} has a negative probability`);
    }
    const total = values.reduce((a, b) => a + b, 0);
    if (Math.abs(total - 1) > PROB_SUM_TOLERANCE) {
      throw new ManifestError(`classification for ${key} sums to ${total}, not 1`);
    }
  }

  return { labels, detections, classifications };
}

export function loadManifest(path: string): ReplayManifest {
  let text: string;
  try {
    text = fs.readFileSync(path, 'utf8');
  } catch (e) {
    throw new ManifestError(`cannot read manifest ${path}: ${e}`);
  }
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch (e) {
    throw new ManifestError(`manifest ${path} is not valid JSON: ${e}`);
  }
  return validateManifest(doc);
}
