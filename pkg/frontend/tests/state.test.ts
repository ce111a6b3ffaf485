import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import type { AssignResponse, QueryResponse, SelectedPart } from "../src/api.js";
import {
  DEFAULT_DEBOUNCE_MS,
  DISTRIBUTION_LAMBDA,
  SelectionStore,
  type QueryClient,
} from "../src/state.js";

/** Distance world: world[chip][part]; a query takes min over chips. */
const WORLD: Record<number, Record<number, number>> = {
  1: { 1: 0, 2: 3, 3: 1, 4: 2 },
  2: { 1: 3, 2: 0, 3: 2, 4: 1 },
};

function selectParts(partIds: number[], lambda: number): SelectedPart[] {
  const parts = [1, 2, 3, 4];
  const selected: SelectedPart[] = [];
  for (const part of parts) {
    const distance = Math.min(...partIds.map((chip) => WORLD[chip]![part]!));
    if (distance <= lambda) selected.push({ part_id: part, distance });
  }
  selected.sort((a, b) => a.distance - b.distance || a.part_id - b.part_id);
  return selected;
}

class FakeClient implements QueryClient {
  queryCalls: { partIds: number[]; lambda: number }[] = [];
  assignCalls: { partIds: number[]; material: string }[] = [];
  assignments: Record<string, string> = {};
  failNextQuery = false;

  async query(_mesh: string, partIds: number[], lambda: number): Promise<QueryResponse> {
    this.queryCalls.push({ partIds: [...partIds], lambda });
    if (this.failNextQuery) {
      this.failNextQuery = false;
      throw new Error("injected failure");
    }
    return { selected: selectParts(partIds, lambda), lambda };
  }

  async assign(
    mesh: string,
    partIds: number[],
    material: string,
  ): Promise<AssignResponse> {
    this.assignCalls.push({ partIds: [...partIds], material });
    for (const pid of partIds) this.assignments[String(pid)] = material;
    return { mesh_id: mesh, assignments: { ...this.assignments } };
  }
}

/** Client whose query promises resolve only when the test says so. */
class ManualClient implements QueryClient {
  pending: {
    partIds: number[];
    lambda: number;
    resolve: (r: QueryResponse) => void;
  }[] = [];

  query(_mesh: string, partIds: number[], lambda: number): Promise<QueryResponse> {
    return new Promise((resolve) => {
      this.pending.push({ partIds: [...partIds], lambda, resolve });
    });
  }

  async assign(): Promise<AssignResponse> {
    throw new Error("not used");
  }

  resolveAt(index: number, response: QueryResponse): void {
    const entry = this.pending[index];
    if (!entry) throw new Error(`no pending query at ${index}`);
    entry.resolve(response);
  }
}

async function tick(ms: number): Promise<void> {
  await vi.advanceTimersByTimeAsync(ms);
}

describe("SelectionStore", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });

  afterEach(() => {
    vi.useRealTimers();
  });

  it("debounces rapid slider moves into one refresh", async () => {
    const client = new FakeClient();
    const store = new SelectionStore(client);
    store.setMesh("m");
    store.addChip(1);
    store.setLambdaPercent(10);
    store.setLambdaPercent(20);
    store.setLambdaPercent(0);
    expect(client.queryCalls).toHaveLength(0);

    await tick(DEFAULT_DEBOUNCE_MS - 1);
    expect(client.queryCalls).toHaveLength(0);

    await tick(1);
    await store.settle();
    // One distribution fetch plus one selection query, nothing else.
    expect(client.queryCalls).toHaveLength(2);
    expect(client.queryCalls[0]!.lambda).toBe(DISTRIBUTION_LAMBDA);
    expect(client.queryCalls[1]!.lambda).toBe(0);
  });

  it("shows exactly the server response, never a local derivation", async () => {
    const client = new FakeClient();
    const store = new SelectionStore(client);
    store.setMesh("m");
    store.addChip(1);
    await tick(DEFAULT_DEBOUNCE_MS);
    await store.settle();
    expect(store.snapshot().selected).toEqual(selectParts([1], 0));
  });

  it("maps slider percent onto distance quantiles", async () => {
    const client = new FakeClient();
    const store = new SelectionStore(client);
    store.setMesh("m");
    store.addChip(1);
    await tick(DEFAULT_DEBOUNCE_MS);
    await store.settle();

    // Distribution for chip 1 is [0, 1, 2, 3].
    expect(store.lambdaForPercent(0)).toBe(0);
    expect(store.lambdaForPercent(50)).toBe(2);
    expect(store.lambdaForPercent(100)).toBe(3);

    store.setLambdaPercent(100);
    await tick(DEFAULT_DEBOUNCE_MS);
    await store.settle();
    expect(store.snapshot().lambda).toBe(3);
    expect(store.snapshot().selectedIds).toEqual(new Set([1, 2, 3, 4]));
  });

  it("keeps the committed distance when a chip is added", async () => {
    const client = new FakeClient();
    const store = new SelectionStore(client);
    store.setMesh("m");
    store.addChip(1);
    store.setLambdaPercent(50);
    await tick(DEFAULT_DEBOUNCE_MS);
    await store.settle();
    expect(store.snapshot().lambda).toBe(2);
    const before = store.snapshot().selectedIds;
    expect(before).toEqual(new Set([1, 3, 4]));

    store.addChip(2);
    await tick(DEFAULT_DEBOUNCE_MS);
    await store.settle();
    const snap = store.snapshot();
    // Same absolute lambda, refreshed distribution, grown selection.
    expect(snap.lambda).toBe(2);
    expect(client.queryCalls.at(-1)!.lambda).toBe(2);
    expect(snap.selectedIds).toEqual(new Set([1, 2, 3, 4]));
    for (const pid of before) expect(snap.selectedIds.has(pid)).toBe(true);
  });

  it("discards stale responses by sequence number", async () => {
    const client = new ManualClient();
    const store = new SelectionStore(client);
    store.setMesh("m");
    store.addChip(1);
    await tick(DEFAULT_DEBOUNCE_MS);
    client.resolveAt(0, { selected: selectParts([1], DISTRIBUTION_LAMBDA), lambda: 0 });
    await tick(0);
    expect(client.pending).toHaveLength(2); // distribution + first selection

    store.setLambdaPercent(100);
    await tick(DEFAULT_DEBOUNCE_MS);
    expect(client.pending).toHaveLength(3);

    // Late second query resolves first and wins; the older one is stale.
    client.resolveAt(2, { selected: selectParts([1], 3), lambda: 3 });
    await tick(0);
    client.resolveAt(1, { selected: selectParts([1], 0), lambda: 0 });
    await tick(0);
    await store.settle();
    expect(store.snapshot().selectedIds).toEqual(new Set([1, 2, 3, 4]));
  });

  it("issues no duplicate request for an in-flight (chips, lambda) key", async () => {
    const client = new ManualClient();
    const store = new SelectionStore(client);
    store.setMesh("m");
    store.addChip(1);
    await tick(DEFAULT_DEBOUNCE_MS);
    client.resolveAt(0, { selected: selectParts([1], DISTRIBUTION_LAMBDA), lambda: 0 });
    await tick(0);
    expect(client.pending).toHaveLength(2);

    store.setLambdaPercent(0); // same key as the in-flight selection
    await tick(DEFAULT_DEBOUNCE_MS);
    expect(client.pending).toHaveLength(2);

    client.resolveAt(1, { selected: selectParts([1], 0), lambda: 0 });
    await store.settle();
    expect(store.snapshot().selectedIds).toEqual(new Set([1]));
  });

  it("keeps the previous selection when the server errors", async () => {
    const client = new FakeClient();
    const errors: unknown[] = [];
    const store = new SelectionStore(client, { onError: (e) => errors.push(e) });
    store.setMesh("m");
    store.addChip(1);
    await tick(DEFAULT_DEBOUNCE_MS);
    await store.settle();
    const before = store.snapshot().selected;

    client.failNextQuery = true;
    store.setLambdaPercent(100);
    await tick(DEFAULT_DEBOUNCE_MS);
    await store.settle();
    expect(errors).toHaveLength(1);
    expect(store.snapshot().selected).toEqual(before);
  });

  it("clears the selection locally when the last chip is removed", async () => {
    const client = new FakeClient();
    const store = new SelectionStore(client);
    store.setMesh("m");
    store.addChip(1);
    await tick(DEFAULT_DEBOUNCE_MS);
    await store.settle();
    const calls = client.queryCalls.length;

    store.removeChip(1);
    expect(store.snapshot().selected).toEqual([]);
    expect(store.snapshot().busy).toBe(false);
    await tick(DEFAULT_DEBOUNCE_MS * 2);
    expect(client.queryCalls).toHaveLength(calls);
  });

  it("rejects assignment with an empty selection", async () => {
    const client = new FakeClient();
    const store = new SelectionStore(client);
    store.setMesh("m");
    await expect(store.assignSelected("wood")).rejects.toThrow(/empty/);
    await expect(
      (async () => {
        store.addChip(1);
        await tick(DEFAULT_DEBOUNCE_MS);
        await store.settle();
        return store.assignSelected("");
      })(),
    ).rejects.toThrow(/nonempty/);
    expect(client.assignCalls).toHaveLength(0);
  });

  it("mirrors the server assignment state after assigning", async () => {
    const client = new FakeClient();
    const store = new SelectionStore(client);
    store.setMesh("m");
    store.addChip(1);
    store.setLambdaPercent(50);
    await tick(DEFAULT_DEBOUNCE_MS);
    await store.settle();

    const result = await store.assignSelected("wood");
    expect(client.assignCalls).toEqual([{ partIds: [1, 3, 4], material: "wood" }]);
    expect(result).toEqual({ 1: "wood", 3: "wood", 4: "wood" });
    expect(store.snapshot().assignments).toEqual({ 1: "wood", 3: "wood", 4: "wood" });
  });
});
