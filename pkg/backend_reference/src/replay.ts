/** Replay backend: answers verbatim from a manifest; unknown keys are errors. */
import type { ReplayManifest } from './manifest';
import type { Backend } from './protocol';

export class ReplayBackend implements Backend {
  readonly labels: string[];
  private readonly manifest: ReplayManifest;

  constructor(manifest: ReplayManifest) {
    this.manifest = manifest;
    this.labels = manifest.labels;
  }

  detect(image: string) {
    return Object.prototype.hasOwnProperty.call(this.manifest.detections, image)
      ? this.manifest.detections[image]
      : null;
  }

  classify(image: string) {
    return Object.prototype.hasOwnProperty.call(this.manifest.classifications, image)
      ? this.manifest.classifications[image]
      : null;
  }
}
