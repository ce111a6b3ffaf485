/* api.ts

Typed client over the part grouping service HTTP API. Every method maps
one-to-one onto a server endpoint; nothing here caches or reinterprets
responses. */

import { decodeGeometry, type MeshGeometry } from "./geometry.js";

export interface IngestResponse {
  mesh_id: string;
  status: string;
}

export interface MeshStatus {
  mesh_id: string;
  status: "ingesting" | "ready" | "failed";
  reason?: string;
  part_count?: number;
}

export interface PartInfo {
  part_id: number;
  material_id: number;
  material_name: string;
  centroid: [number, number, number];
  max_radial_extent: number;
  vertex_count: number;
  face_count: number;
  group_exemplar: number;
}

export interface PartsResponse {
  mesh_id: string;
  parts: PartInfo[];
}

export interface SelectedPart {
  part_id: number;
  distance: number;
}

export interface QueryResponse {
  selected: SelectedPart[];
  lambda: number;
}

export interface AssignResponse {
  mesh_id: string;
  assignments: Record<string, string>;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function raiseForStatus(res: Response): Promise<void> {
  if (res.ok) return;
  let detail = res.statusText;
  try {
    const body = await res.json();
    detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
  } catch {
    /* non-JSON error body; keep the status text */
  }
  throw new ApiError(res.status, detail);
}

/** GET with one retry: a kept-alive socket the server just closed shows
 * up as a network error on reuse, and GETs are safe to replay. */
async function fetchGet(url: string): Promise<Response> {
  try {
    return await fetch(url);
  } catch {
    return fetch(url);
  }
}

export class PartMatchClient {
  constructor(public readonly baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async uploadMesh(bytes: ArrayBuffer | Uint8Array): Promise<IngestResponse> {
    const body = bytes instanceof Uint8Array ? new Uint8Array(bytes) : bytes;
    const res = await fetch(this.url("/meshes"), {
      method: "POST",
      headers: { "content-type": "application/octet-stream" },
      body,
    });
    await raiseForStatus(res);
    return res.json();
  }

  async status(meshId: string): Promise<MeshStatus> {
    const res = await fetchGet(this.url(`/meshes/${meshId}`));
    await raiseForStatus(res);
    return res.json();
  }

  /** Poll until the session leaves `ingesting`; rejects on `failed`. */
  async waitUntilReady(
    meshId: string,
    { timeoutMs = 120_000, pollMs = 200 } = {},
  ): Promise<MeshStatus> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const status = await this.status(meshId);
      if (status.status === "ready") return status;
      if (status.status === "failed") {
        throw new ApiError(409, status.reason ?? "ingest failed");
      }
      if (Date.now() > deadline) {
        throw new ApiError(408, `mesh ${meshId} not ready after ${timeoutMs}ms`);
      }
      await new Promise((resolve) => setTimeout(resolve, pollMs));
    }
  }

  async parts(meshId: string): Promise<PartsResponse> {
    const res = await fetchGet(this.url(`/meshes/${meshId}/parts`));
    await raiseForStatus(res);
    return res.json();
  }

  async geometry(meshId: string): Promise<MeshGeometry> {
    const res = await fetchGet(this.url(`/meshes/${meshId}/geometry`));
    await raiseForStatus(res);
    return decodeGeometry(await res.arrayBuffer());
  }

  async query(meshId: string, partIds: number[], lambda: number): Promise<QueryResponse> {
    const res = await fetch(this.url(`/meshes/${meshId}/query`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ query_part_ids: partIds, lambda }),
    });
    await raiseForStatus(res);
    return res.json();
  }

  async assign(
    meshId: string,
    partIds: number[],
    material: string,
  ): Promise<AssignResponse> {
    const res = await fetch(this.url(`/meshes/${meshId}/assignments`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ part_ids: partIds, material }),
    });
    await raiseForStatus(res);
    return res.json();
  }

  async exportJson(meshId: string): Promise<Record<string, string>> {
    const res = await fetchGet(this.url(`/meshes/${meshId}/export.json`));
    await raiseForStatus(res);
    return res.json();
  }

  async exportObj(meshId: string): Promise<string> {
    const res = await fetchGet(this.url(`/meshes/${meshId}/export.obj`));
    await raiseForStatus(res);
    return res.text();
  }

  viewUrl(meshId: string, partId: number, view: "isolated" | "context" | "full"): string {
    return this.url(`/meshes/${meshId}/parts/${partId}/views/${view}.png`);
  }
}
