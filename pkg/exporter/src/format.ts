/**
 * On-disk formats shared with the detection toolkit.
 *
 * Feature files: magic "LAOD", uint32 LE version (= 1), uint64 LE rows,
 * uint64 LE cols, then rows*cols float32 LE values row-major. File length is
 * exactly 24 + 4*rows*cols bytes. Manifests are JSON listing one feature
 * file per layer plus an optional labels file (one integer per line).
 */

import * as fs from 'fs'
import * as path from 'path'

export const MAGIC = 'LAOD'
export const FEATURE_VERSION = 1
export const MANIFEST_VERSION = 1
const HEADER_BYTES = 24

export interface FeatureMatrix {
  rows: number
  cols: number
  /** row-major, length rows*cols */
  data: Float32Array
}

export function encodeFeatures(m: FeatureMatrix): Buffer {
  if (m.data.length !== m.rows * m.cols) {
    throw new Error(`data length ${m.data.length} != rows*cols ${m.rows * m.cols}`)
  }
  for (const v of m.data) {
    if (!Number.isFinite(v)) throw new Error('matrix must be finite-valued')
  }
  const buf = Buffer.alloc(HEADER_BYTES + 4 * m.rows * m.cols)
  buf.write(MAGIC, 0, 'ascii')
  buf.writeUInt32LE(FEATURE_VERSION, 4)
  buf.writeBigUInt64LE(BigInt(m.rows), 8)
  buf.writeBigUInt64LE(BigInt(m.cols), 16)
  for (let i = 0; i < m.data.length; i++) {
    buf.writeFloatLE(m.data[i], HEADER_BYTES + 4 * i)
  }
  return buf
}

export function writeFeatures(file: string, m: FeatureMatrix): void {
  fs.writeFileSync(file, encodeFeatures(m))
}

export function readFeatures(file: string): FeatureMatrix {
  const buf = fs.readFileSync(file)
  if (buf.length < HEADER_BYTES) {
    throw new Error(`${file}: truncated header (${buf.length} bytes)`)
  }
  const magic = buf.toString('ascii', 0, 4)
  if (magic !== MAGIC) {
    throw new Error(`${file}: bad magic ${JSON.stringify(magic)}, expected ${MAGIC}`)
  }
  const version = buf.readUInt32LE(4)
  if (version !== FEATURE_VERSION) {
    throw new Error(`${file}: unsupported version ${version}, expected ${FEATURE_VERSION}`)
  }
  const rows = Number(buf.readBigUInt64LE(8))
  const cols = Number(buf.readBigUInt64LE(16))
  const expected = HEADER_BYTES + 4 * rows * cols
  if (buf.length !== expected) {
    throw new Error(
      `${file}: payload length ${buf.length - HEADER_BYTES} does not match rows*cols*4 = ${expected - HEADER_BYTES}`,
    )
  }
  const data = new Float32Array(rows * cols)
  for (let i = 0; i < data.length; i++) {
    data[i] = buf.readFloatLE(HEADER_BYTES + 4 * i)
  }
  return { rows, cols, data }
}

export interface ManifestLayer {
  name: string
  dim: number
  file: string
}

export function writeManifest(
  file: string,
  numSamples: number,
  layers: ManifestLayer[],
  labelsFile?: string,
): void {
  const doc: Record<string, unknown> = {
    version: MANIFEST_VERSION,
    num_samples: numSamples,
    layers: layers.map((l) => ({ name: l.name, dim: l.dim, file: l.file })),
  }
  if (labelsFile !== undefined) doc['labels_file'] = labelsFile
  fs.writeFileSync(file, canonicalJson(doc) + '\n')
}

/** JSON with sorted keys so identical exports are byte-identical. */
export function canonicalJson(value: unknown, indent = 2): string {
  const sort = (v: unknown): unknown => {
    if (Array.isArray(v)) return v.map(sort)
    if (v !== null && typeof v === 'object') {
      const out: Record<string, unknown> = {}
      for (const key of Object.keys(v as Record<string, unknown>).sort()) {
        out[key] = sort((v as Record<string, unknown>)[key])
      }
      return out
    }
    return v
  }
  return JSON.stringify(sort(value), null, indent)
}

export function writeLabels(file: string, labels: number[]): void {
  fs.writeFileSync(file, labels.map((v) => String(v)).join('\n') + '\n')
}

export function ensureDir(dir: string): void {
  fs.mkdirSync(path.resolve(dir), { recursive: true })
}
