// Rolling window of observations for the live view. Records arrive via
// polling and may overlap between polls; server_seq deduplicates.

import type { ObservationRecord } from "./types.js";

export class LiveBuffer {
  private byServerSeq = new Map<number, ObservationRecord>();

  constructor(public windowS: number = 300) {}

  merge(records: ObservationRecord[]): void {
    for (const record of records) this.byServerSeq.set(record.server_seq, record);
    if (this.byServerSeq.size === 0) return;
    let latest = -Infinity;
    for (const record of this.byServerSeq.values()) latest = Math.max(latest, record.t);
    for (const [key, record] of this.byServerSeq) {
      if (record.t < latest - this.windowS) this.byServerSeq.delete(key);
    }
  }

  clear(): void {
    this.byServerSeq.clear();
  }

  /** Records ordered by (t, seq). */
  items(): ObservationRecord[] {
    return [...this.byServerSeq.values()].sort(
      (a, b) => a.t - b.t || a.seq - b.seq,
    );
  }

  get latestT(): number | null {
    let latest = -Infinity;
    for (const record of this.byServerSeq.values()) latest = Math.max(latest, record.t);
    return latest === -Infinity ? null : latest;
  }
}
