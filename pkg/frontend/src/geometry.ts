/* geometry.ts

Decode the binary geometry buffer served by GET /meshes/{id}/geometry:
a 4-byte little-endian header length, a JSON header, then raw sections
in header order (vertices f32, indices u32, face part ids u32). */

export interface GeometrySection {
  name: string;
  dtype: "f32" | "u32";
  count: number;
}

export interface GeometryHeader {
  format: string;
  vertex_count: number;
  face_count: number;
  sections: GeometrySection[];
}

export interface MeshGeometry {
  header: GeometryHeader;
  /** xyz per vertex, length 3 * vertex_count. */
  vertices: Float32Array;
  /** Vertex indices, 3 per face. */
  indices: Uint32Array;
  /** One part id per face. */
  facePartIds: Uint32Array;
}

const SECTION_BYTES: Record<GeometrySection["dtype"], number> = { f32: 4, u32: 4 };

/** Copy a byte range into a fresh, aligned typed array. */
function readSection(
  buffer: ArrayBuffer,
  offset: number,
  section: GeometrySection,
): Float32Array | Uint32Array {
  const byteLength = section.count * SECTION_BYTES[section.dtype];
  if (offset + byteLength > buffer.byteLength) {
    throw new Error(
      `geometry buffer truncated in section ${section.name}: ` +
        `need ${offset + byteLength} bytes, have ${buffer.byteLength}`,
    );
  }
  const copy = buffer.slice(offset, offset + byteLength);
  return section.dtype === "f32" ? new Float32Array(copy) : new Uint32Array(copy);
}

export function decodeGeometry(buffer: ArrayBuffer): MeshGeometry {
  if (buffer.byteLength < 4) {
    throw new Error("geometry buffer too short for header length");
  }
  const headerLength = new DataView(buffer).getUint32(0, true);
  if (4 + headerLength > buffer.byteLength) {
    throw new Error(`geometry header length ${headerLength} exceeds buffer`);
  }
  const headerText = new TextDecoder("utf-8").decode(
    new Uint8Array(buffer, 4, headerLength),
  );
  const header = JSON.parse(headerText) as GeometryHeader;
  if (!Array.isArray(header.sections)) {
    throw new Error("geometry header missing sections");
  }

  const sections: Record<string, Float32Array | Uint32Array> = {};
  let offset = 4 + headerLength;
  for (const section of header.sections) {
    if (!(section.dtype in SECTION_BYTES)) {
      throw new Error(`unknown section dtype ${section.dtype}`);
    }
    sections[section.name] = readSection(buffer, offset, section);
    offset += section.count * SECTION_BYTES[section.dtype];
  }

  const vertices = sections["vertices"];
  const indices = sections["indices"];
  const facePartIds = sections["face_part_ids"];
  if (!(vertices instanceof Float32Array)) {
    throw new Error("geometry missing f32 vertices section");
  }
  if (!(indices instanceof Uint32Array) || !(facePartIds instanceof Uint32Array)) {
    throw new Error("geometry missing u32 indices / face_part_ids sections");
  }
  if (vertices.length !== 3 * header.vertex_count) {
    throw new Error(
      `vertices length ${vertices.length} != 3 * vertex_count ${header.vertex_count}`,
    );
  }
  if (indices.length !== 3 * header.face_count) {
    throw new Error(
      `indices length ${indices.length} != 3 * face_count ${header.face_count}`,
    );
  }
  if (facePartIds.length !== header.face_count) {
    throw new Error(
      `face_part_ids length ${facePartIds.length} != face_count ${header.face_count}`,
    );
  }
  for (const idx of indices) {
    if (idx >= header.vertex_count) {
      throw new Error(`vertex index ${idx} out of range ${header.vertex_count}`);
    }
  }
  return { header, vertices, indices, facePartIds };
}

/** Number of distinct part ids in the geometry. */
export function partCount(geometry: MeshGeometry): number {
  return new Set(geometry.facePartIds).size;
}
