/* state.ts

Single UI state store. The highlighted selection is always the most
recent server response for (chips, lambda): the store never derives a
selection locally. Slider moves commit an absolute lambda obtained from
the current query's distance distribution (quantile mapping), so later
chip edits re-query at the same distance threshold. Refreshes are
debounced and stale responses are discarded by sequence number. */

import type { AssignResponse, QueryResponse, SelectedPart } from "./api.js";

export interface QueryClient {
  query(meshId: string, partIds: number[], lambda: number): Promise<QueryResponse>;
  assign(meshId: string, partIds: number[], material: string): Promise<AssignResponse>;
}

export interface SelectionSnapshot {
  meshId: string | null;
  chips: readonly number[];
  /** Slider position, 0..100. */
  lambdaPercent: number;
  /** Committed absolute distance threshold sent to the server. */
  lambda: number;
  /** Latest server response, in server order. */
  selected: readonly SelectedPart[];
  selectedIds: ReadonlySet<number>;
  assignments: Readonly<Record<number, string>>;
  busy: boolean;
}

export interface StoreOptions {
  debounceMs?: number;
  onError?: (error: unknown) => void;
}

/** Lambda used to fetch the full distance distribution for the quantile map. */
export const DISTRIBUTION_LAMBDA = 1e30;

export const DEFAULT_DEBOUNCE_MS = 150;

type Listener = (snapshot: SelectionSnapshot) => void;

export class SelectionStore {
  private meshId: string | null = null;
  private chips: number[] = [];
  private lambdaPercent = 0;
  private lambda = 0;
  private selected: SelectedPart[] = [];
  private assignments: Record<number, string> = {};

  /** Sorted min-distances for the current chips; quantile source. */
  private distribution: number[] = [];
  private distributionStale = true;
  /** Percent set before any distribution existed; mapped on next fetch. */
  private percentPending = false;

  private readonly debounceMs: number;
  private readonly onError: (error: unknown) => void;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private issueSeq = 0;
  private inflight = 0;
  private inflightKey: string | null = null;
  private idleWaiters: (() => void)[] = [];
  private listeners: Listener[] = [];

  constructor(
    private readonly client: QueryClient,
    options: StoreOptions = {},
  ) {
    this.debounceMs = options.debounceMs ?? DEFAULT_DEBOUNCE_MS;
    this.onError = options.onError ?? (() => {});
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  snapshot(): SelectionSnapshot {
    return {
      meshId: this.meshId,
      chips: [...this.chips],
      lambdaPercent: this.lambdaPercent,
      lambda: this.lambda,
      selected: [...this.selected],
      selectedIds: new Set(this.selected.map((s) => s.part_id)),
      assignments: { ...this.assignments },
      busy: this.inflight > 0 || this.timer !== null,
    };
  }

  /** Resolves once no debounce timer or request is pending. */
  settle(): Promise<void> {
    if (this.timer === null && this.inflight === 0) return Promise.resolve();
    return new Promise((resolve) => this.idleWaiters.push(resolve));
  }

  setMesh(meshId: string): void {
    this.meshId = meshId;
    this.chips = [];
    this.lambdaPercent = 0;
    this.lambda = 0;
    this.selected = [];
    this.assignments = {};
    this.distribution = [];
    this.distributionStale = true;
    this.percentPending = false;
    this.cancelPending();
    this.emit();
  }

  addChip(partId: number): void {
    if (this.chips.includes(partId)) return;
    this.chips.push(partId);
    this.distributionStale = true;
    this.scheduleRefresh();
  }

  removeChip(partId: number): void {
    const before = this.chips.length;
    this.chips = this.chips.filter((c) => c !== partId);
    if (this.chips.length === before) return;
    this.distributionStale = true;
    if (this.chips.length === 0) {
      // No chips, no selection: cleared locally because there is nothing
      // to ask the server for.
      this.selected = [];
      this.cancelPending();
      this.emit();
      return;
    }
    this.scheduleRefresh();
  }

  /** Map a slider percent to a distance via the current distribution. */
  lambdaForPercent(percent: number): number {
    if (this.distribution.length === 0) return 0;
    const p = Math.min(100, Math.max(0, percent));
    const idx = Math.round((p / 100) * (this.distribution.length - 1));
    return this.distribution[idx]!;
  }

  setLambdaPercent(percent: number): void {
    this.lambdaPercent = Math.min(100, Math.max(0, percent));
    if (this.distributionStale) {
      // Commit happens after the next distribution fetch. Chip edits
      // alone never re-map: the committed distance must survive them so
      // adding a chip can only grow the selection.
      this.percentPending = true;
    } else {
      this.lambda = this.lambdaForPercent(this.lambdaPercent);
    }
    if (this.chips.length > 0) this.scheduleRefresh();
  }

  async assignSelected(material: string): Promise<Record<number, string>> {
    if (this.meshId === null) throw new Error("no mesh loaded");
    if (!material) throw new Error("material name must be nonempty");
    const ids = this.selected.map((s) => s.part_id).sort((a, b) => a - b);
    if (ids.length === 0) throw new Error("selection is empty");
    const response = await this.client.assign(this.meshId, ids, material);
    this.assignments = {};
    for (const [pid, name] of Object.entries(response.assignments)) {
      this.assignments[Number(pid)] = name;
    }
    this.emit();
    return { ...this.assignments };
  }

  private emit(): void {
    const snap = this.snapshot();
    for (const listener of this.listeners) listener(snap);
  }

  private cancelPending(): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    this.checkIdle();
  }

  private checkIdle(): void {
    if (this.timer === null && this.inflight === 0) {
      const waiters = this.idleWaiters;
      this.idleWaiters = [];
      for (const resolve of waiters) resolve();
    }
  }

  private scheduleRefresh(): void {
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.refresh();
    }, this.debounceMs);
    this.emit();
  }

  private async refresh(): Promise<void> {
    if (this.meshId === null || this.chips.length === 0) {
      this.checkIdle();
      return;
    }
    const meshId = this.meshId;
    const chips = [...this.chips];
    this.inflight++;
    try {
      if (this.distributionStale) {
        const full = await this.client.query(meshId, chips, DISTRIBUTION_LAMBDA);
        this.distribution = full.selected.map((s) => s.distance).sort((a, b) => a - b);
        this.distributionStale = false;
        if (this.percentPending) {
          this.lambda = this.lambdaForPercent(this.lambdaPercent);
          this.percentPending = false;
        }
      }
      const lambda = this.lambda;
      const key = JSON.stringify([chips, lambda]);
      if (this.inflightKey === key) return;
      this.inflightKey = key;
      const seq = ++this.issueSeq;
      try {
        const response = await this.client.query(meshId, chips, lambda);
        if (seq === this.issueSeq) {
          this.selected = [...response.selected];
          this.emit();
        }
      } finally {
        this.inflightKey = null;
      }
    } catch (error) {
      // Keep the previous selection on failure; surfaced, not applied.
      this.onError(error);
    } finally {
      this.inflight--;
      this.checkIdle();
    }
  }
}
