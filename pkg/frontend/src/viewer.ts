/* viewer.ts

Three.js viewport: renders the decoded geometry with flat per-face part
colors, a simple orbit camera, and click picking through the shared
ray-cast module (per-face part attribute, not a color-id render pass). */

import * as THREE from "three";
import type { MeshGeometry } from "./geometry.js";
import { pickPart, rayFromScreen, type Vec3 } from "./raycast.js";

export const BASE_COLOR: Vec3 = [180 / 255, 180 / 255, 180 / 255];
export const CHIP_COLOR: Vec3 = [230 / 255, 60 / 255, 30 / 255];
export const SELECTED_COLOR: Vec3 = [255 / 255, 154 / 255, 60 / 255];

/** Stable material tint from its name; avoids the highlight hues. */
export function materialColor(name: string): Vec3 {
  let hash = 2166136261;
  for (let i = 0; i < name.length; i++) {
    hash = Math.imul(hash ^ name.charCodeAt(i), 16777619) >>> 0;
  }
  const hue = (hash % 256) / 256;
  const color = new THREE.Color().setHSL(0.35 + 0.5 * hue, 0.55, 0.55);
  return [color.r, color.g, color.b];
}

export interface ViewerCallbacks {
  onPick?: (partId: number) => void;
}

interface OrbitState {
  theta: number;
  phi: number;
  radius: number;
  center: THREE.Vector3;
}

export class PartViewer {
  private readonly renderer: THREE.WebGLRenderer;
  private readonly scene = new THREE.Scene();
  private readonly camera: THREE.PerspectiveCamera;
  private mesh: THREE.Mesh | null = null;
  private geometry: MeshGeometry | null = null;
  private colors: Float32Array | null = null;
  private orbit: OrbitState = {
    theta: 0.6,
    phi: 1.1,
    radius: 5,
    center: new THREE.Vector3(),
  };
  private dragging = false;
  private dragMoved = false;
  private lastPointer = { x: 0, y: 0 };

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly callbacks: ViewerCallbacks = {},
  ) {
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.camera = new THREE.PerspectiveCamera(45, 1, 0.01, 1000);
    this.scene.background = new THREE.Color(0x1c1e22);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.6));
    const headlight = new THREE.DirectionalLight(0xffffff, 1.2);
    headlight.position.set(1, 2, 3);
    this.scene.add(headlight);

    canvas.addEventListener("pointerdown", (e) => this.onPointerDown(e));
    canvas.addEventListener("pointermove", (e) => this.onPointerMove(e));
    canvas.addEventListener("pointerup", (e) => this.onPointerUp(e));
    canvas.addEventListener("wheel", (e) => this.onWheel(e), { passive: false });
  }

  load(geometry: MeshGeometry): void {
    this.geometry = geometry;
    if (this.mesh) {
      this.scene.remove(this.mesh);
      this.mesh.geometry.dispose();
    }

    // Non-indexed buffers so each face can carry a flat color.
    const faceCount = geometry.header.face_count;
    const positions = new Float32Array(faceCount * 9);
    this.colors = new Float32Array(faceCount * 9);
    for (let f = 0; f < faceCount; f++) {
      for (let v = 0; v < 3; v++) {
        const src = 3 * geometry.indices[3 * f + v]!;
        positions.set(
          [
            geometry.vertices[src]!,
            geometry.vertices[src + 1]!,
            geometry.vertices[src + 2]!,
          ],
          9 * f + 3 * v,
        );
      }
    }

    const buffer = new THREE.BufferGeometry();
    buffer.setAttribute("position", new THREE.BufferAttribute(positions, 3));
    buffer.setAttribute("color", new THREE.BufferAttribute(this.colors, 3));
    buffer.computeVertexNormals();
    const material = new THREE.MeshLambertMaterial({
      vertexColors: true,
      side: THREE.DoubleSide,
    });
    this.mesh = new THREE.Mesh(buffer, material);
    this.scene.add(this.mesh);

    buffer.computeBoundingSphere();
    const sphere = buffer.boundingSphere;
    if (sphere) {
      this.orbit.center.copy(sphere.center);
      this.orbit.radius = Math.max(sphere.radius * 2.5, 0.1);
    }
    this.paint(() => BASE_COLOR);
  }

  /** Repaint every face from a part-id to color mapping. */
  paint(colorOf: (partId: number) => Vec3): void {
    if (!this.geometry || !this.colors || !this.mesh) return;
    const faceCount = this.geometry.header.face_count;
    for (let f = 0; f < faceCount; f++) {
      const [r, g, b] = colorOf(this.geometry.facePartIds[f]!);
      for (let v = 0; v < 3; v++) {
        this.colors.set([r, g, b], 9 * f + 3 * v);
      }
    }
    const attr = this.mesh.geometry.getAttribute("color") as THREE.BufferAttribute;
    attr.needsUpdate = true;
    this.render();
  }

  render(): void {
    const width = this.canvas.clientWidth || this.canvas.width;
    const height = this.canvas.clientHeight || this.canvas.height;
    this.renderer.setSize(width, height, false);
    this.camera.aspect = width / height;

    const { theta, phi, radius, center } = this.orbit;
    this.camera.position.set(
      center.x + radius * Math.sin(phi) * Math.cos(theta),
      center.y + radius * Math.cos(phi),
      center.z + radius * Math.sin(phi) * Math.sin(theta),
    );
    this.camera.up.set(0, 1, 0);
    this.camera.lookAt(center);
    this.camera.updateProjectionMatrix();
    this.renderer.render(this.scene, this.camera);
  }

  /** Pick the part under a canvas-space pixel, or null on background. */
  pickAt(px: number, py: number): number | null {
    if (!this.geometry) return null;
    const width = this.canvas.clientWidth || this.canvas.width;
    const height = this.canvas.clientHeight || this.canvas.height;
    const eye: Vec3 = [
      this.camera.position.x,
      this.camera.position.y,
      this.camera.position.z,
    ];
    const target: Vec3 = [
      this.orbit.center.x,
      this.orbit.center.y,
      this.orbit.center.z,
    ];
    const { origin, dir } = rayFromScreen(px, py, width, height, {
      eye,
      target,
      up: [0, 1, 0],
      fovYDeg: this.camera.fov,
    });
    const hit = pickPart(this.geometry, origin, dir);
    return hit ? hit.partId : null;
  }

  private onPointerDown(event: PointerEvent): void {
    this.dragging = true;
    this.dragMoved = false;
    this.lastPointer = { x: event.clientX, y: event.clientY };
    this.canvas.setPointerCapture(event.pointerId);
  }

  private onPointerMove(event: PointerEvent): void {
    if (!this.dragging) return;
    const dx = event.clientX - this.lastPointer.x;
    const dy = event.clientY - this.lastPointer.y;
    if (Math.abs(dx) + Math.abs(dy) > 2) this.dragMoved = true;
    this.lastPointer = { x: event.clientX, y: event.clientY };
    this.orbit.theta += dx * 0.01;
    this.orbit.phi = Math.min(Math.PI - 0.05, Math.max(0.05, this.orbit.phi + dy * 0.01));
    this.render();
  }

  private onPointerUp(event: PointerEvent): void {
    this.canvas.releasePointerCapture(event.pointerId);
    const wasDrag = this.dragMoved;
    this.dragging = false;
    this.dragMoved = false;
    if (wasDrag) return;
    const rect = this.canvas.getBoundingClientRect();
    const partId = this.pickAt(event.clientX - rect.left, event.clientY - rect.top);
    if (partId !== null) this.callbacks.onPick?.(partId);
  }

  private onWheel(event: WheelEvent): void {
    event.preventDefault();
    const factor = Math.exp(event.deltaY * 0.001);
    this.orbit.radius = Math.min(1e4, Math.max(1e-2, this.orbit.radius * factor));
    this.render();
  }
}
