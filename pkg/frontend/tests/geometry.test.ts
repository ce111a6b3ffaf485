import { describe, expect, it } from "vitest";

import { decodeGeometry, partCount } from "../src/geometry.js";

/** Build a wire buffer by hand from the documented layout. */
function buildBuffer(header: object, payload: (Float32Array | Uint32Array)[]): ArrayBuffer {
  const headerBytes = new TextEncoder().encode(JSON.stringify(header));
  const payloadBytes = payload.reduce((n, arr) => n + arr.byteLength, 0);
  const buffer = new ArrayBuffer(4 + headerBytes.length + payloadBytes);
  new DataView(buffer).setUint32(0, headerBytes.length, true);
  const bytes = new Uint8Array(buffer);
  bytes.set(headerBytes, 4);
  let offset = 4 + headerBytes.length;
  for (const arr of payload) {
    bytes.set(new Uint8Array(arr.buffer, arr.byteOffset, arr.byteLength), offset);
    offset += arr.byteLength;
  }
  return buffer;
}

function quadHeader() {
  return {
    format: "test",
    vertex_count: 4,
    face_count: 2,
    sections: [
      { name: "vertices", dtype: "f32", count: 12 },
      { name: "indices", dtype: "u32", count: 6 },
      { name: "face_part_ids", dtype: "u32", count: 2 },
    ],
  };
}

function quadPayload(): [Float32Array, Uint32Array, Uint32Array] {
  return [
    new Float32Array([0, 0, 0, 1, 0, 0, 1, 1, 0, 0, 1, 0]),
    new Uint32Array([0, 1, 2, 0, 2, 3]),
    new Uint32Array([0, 5]),
  ];
}

describe("decodeGeometry", () => {
  it("decodes a hand-built quad buffer", () => {
    const geo = decodeGeometry(buildBuffer(quadHeader(), quadPayload()));
    expect(geo.header.vertex_count).toBe(4);
    expect(geo.header.face_count).toBe(2);
    expect(Array.from(geo.vertices)).toEqual([0, 0, 0, 1, 0, 0, 1, 1, 0, 0, 1, 0]);
    expect(Array.from(geo.indices)).toEqual([0, 1, 2, 0, 2, 3]);
    expect(Array.from(geo.facePartIds)).toEqual([0, 5]);
    expect(partCount(geo)).toBe(2);
  });

  it("copies sections even when the header length is unaligned", () => {
    // A header whose JSON length is not a multiple of 4 forces the f32
    // section to start at an unaligned byte offset.
    let pad = "x";
    while (JSON.stringify({ ...quadHeader(), format: pad }).length % 4 === 0) {
      pad += "x";
    }
    const header = { ...quadHeader(), format: pad };
    expect(JSON.stringify(header).length % 4).not.toBe(0);
    const geo = decodeGeometry(buildBuffer(header, quadPayload()));
    expect(geo.vertices[3]).toBe(1);
  });

  it("rejects truncated buffers", () => {
    const whole = buildBuffer(quadHeader(), quadPayload());
    expect(() => decodeGeometry(whole.slice(0, 3))).toThrow(/too short/);
    expect(() => decodeGeometry(whole.slice(0, whole.byteLength - 4))).toThrow(
      /truncated/,
    );
  });

  it("rejects a header length pointing past the buffer", () => {
    const buffer = new ArrayBuffer(8);
    new DataView(buffer).setUint32(0, 1000, true);
    expect(() => decodeGeometry(buffer)).toThrow(/exceeds buffer/);
  });

  it("rejects count mismatches against the header", () => {
    const badVertices = quadHeader();
    badVertices.vertex_count = 5;
    expect(() => decodeGeometry(buildBuffer(badVertices, quadPayload()))).toThrow(
      /vertices length/,
    );

    const badFaces = quadHeader();
    badFaces.face_count = 3;
    badFaces.sections[1]!.count = 9;
    const [v, , fp] = quadPayload();
    const indices = new Uint32Array([0, 1, 2, 0, 2, 3, 0, 1, 3]);
    expect(() => decodeGeometry(buildBuffer(badFaces, [v, indices, fp]))).toThrow(
      /face_part_ids length/,
    );
  });

  it("rejects out-of-range vertex indices", () => {
    const [v, , fp] = quadPayload();
    const indices = new Uint32Array([0, 1, 9, 0, 2, 3]);
    expect(() => decodeGeometry(buildBuffer(quadHeader(), [v, indices, fp]))).toThrow(
      /out of range/,
    );
  });

  it("rejects unknown section dtypes", () => {
    const header = quadHeader();
    (header.sections[0] as { dtype: string }).dtype = "f64";
    expect(() => decodeGeometry(buildBuffer(header, quadPayload()))).toThrow(
      /unknown section dtype/,
    );
  });
});
