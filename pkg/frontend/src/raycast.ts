/* raycast.ts

Part picking: cast a ray against the decoded triangle soup and return
the part id of the nearest hit face. No culling, so back faces pick the
same as front faces; a miss returns null. */

import type { MeshGeometry } from "./geometry.js";

export type Vec3 = readonly [number, number, number];

export interface PickHit {
  partId: number;
  faceIndex: number;
  /** Ray parameter of the hit (distance in units of |dir|). */
  t: number;
  point: Vec3;
}

export interface PickCamera {
  eye: Vec3;
  target: Vec3;
  up: Vec3;
  /** Vertical field of view in degrees. */
  fovYDeg: number;
}

const EPS = 1e-12;
const T_MIN = 1e-9;

function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

export function normalize(v: Vec3): Vec3 {
  const n = Math.hypot(v[0], v[1], v[2]);
  if (n === 0) throw new Error("cannot normalize zero vector");
  return [v[0] / n, v[1] / n, v[2] / n];
}

/** Moller-Trumbore intersection; returns the ray parameter t or null. */
export function intersectTriangle(
  origin: Vec3,
  dir: Vec3,
  a: Vec3,
  b: Vec3,
  c: Vec3,
): number | null {
  const e1 = sub(b, a);
  const e2 = sub(c, a);
  const p = cross(dir, e2);
  const det = dot(e1, p);
  if (Math.abs(det) < EPS) return null;
  const inv = 1.0 / det;
  const s = sub(origin, a);
  const u = dot(s, p) * inv;
  if (u < 0 || u > 1) return null;
  const q = cross(s, e1);
  const v = dot(dir, q) * inv;
  if (v < 0 || u + v > 1) return null;
  const t = dot(e2, q) * inv;
  return t > T_MIN ? t : null;
}

function vertex(geometry: MeshGeometry, index: number): Vec3 {
  const base = 3 * index;
  return [
    geometry.vertices[base]!,
    geometry.vertices[base + 1]!,
    geometry.vertices[base + 2]!,
  ];
}

/** Nearest-hit pick over every face; ties go to the lower face index. */
export function pickPart(
  geometry: MeshGeometry,
  origin: Vec3,
  dir: Vec3,
): PickHit | null {
  let best: PickHit | null = null;
  const faceCount = geometry.header.face_count;
  for (let f = 0; f < faceCount; f++) {
    const a = vertex(geometry, geometry.indices[3 * f]!);
    const b = vertex(geometry, geometry.indices[3 * f + 1]!);
    const c = vertex(geometry, geometry.indices[3 * f + 2]!);
    const t = intersectTriangle(origin, dir, a, b, c);
    if (t !== null && (best === null || t < best.t)) {
      best = {
        partId: geometry.facePartIds[f]!,
        faceIndex: f,
        t,
        point: [
          origin[0] + t * dir[0],
          origin[1] + t * dir[1],
          origin[2] + t * dir[2],
        ],
      };
    }
  }
  return best;
}

/** Pinhole ray through a pixel center, matching a look-at camera. */
export function rayFromScreen(
  px: number,
  py: number,
  width: number,
  height: number,
  camera: PickCamera,
): { origin: Vec3; dir: Vec3 } {
  const forward = normalize(sub(camera.target, camera.eye));
  const right = normalize(cross(forward, camera.up));
  const trueUp = cross(right, forward);
  const halfH = Math.tan((camera.fovYDeg * Math.PI) / 360);
  const halfW = halfH * (width / height);
  const ndcX = (2 * (px + 0.5)) / width - 1;
  const ndcY = 1 - (2 * (py + 0.5)) / height;
  const dir: Vec3 = [
    forward[0] + ndcX * halfW * right[0] + ndcY * halfH * trueUp[0],
    forward[1] + ndcX * halfW * right[1] + ndcY * halfH * trueUp[1],
    forward[2] + ndcX * halfW * right[2] + ndcY * halfH * trueUp[2],
  ];
  return { origin: camera.eye, dir: normalize(dir) };
}
