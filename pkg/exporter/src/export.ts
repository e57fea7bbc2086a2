/**
 * Export pipeline: images -> 32x32 Lanczos resize -> per-layer activations ->
 * global average pooling -> toolkit feature files, manifest, and labels.
 *
 * Sample order is the sorted file order and is identical across layers.
 * Labels follow the image-folder convention: images sitting in class
 * subdirectories get the sorted subdirectory index, loose images get 0.
 */

import * as fs from 'fs'
import * as path from 'path'
import * as tf from '@tensorflow/tfjs'

import { FeatureMatrix, ensureDir, writeFeatures, writeLabels, writeManifest, canonicalJson } from './format'
import { buildModel, globalAveragePool } from './model'
import { readPpm, resizeLanczos } from './ppm'

export interface ExportSpec {
  modelName: string
  imagesDir: string
  outDir: string
  batchSize?: number
  seed?: number
}

export interface ExportResult {
  manifestPath: string
  layerNames: string[]
  numSamples: number
  skipped: string[]
}

interface ImageEntry {
  file: string
  label: number
}

const IMAGE_EXT = /\.(ppm|pgm)$/i

export function listImages(dir: string): ImageEntry[] {
  const entries: ImageEntry[] = []
  const names = fs.readdirSync(dir).sort()
  const subdirs = names.filter((n) => fs.statSync(path.join(dir, n)).isDirectory())
  for (const name of names) {
    const full = path.join(dir, name)
    if (fs.statSync(full).isFile() && IMAGE_EXT.test(name)) {
      entries.push({ file: full, label: 0 })
    }
  }
  subdirs.forEach((sub, index) => {
    for (const name of fs.readdirSync(path.join(dir, sub)).sort()) {
      const full = path.join(dir, sub, name)
      if (fs.statSync(full).isFile() && IMAGE_EXT.test(name)) {
        entries.push({ file: full, label: index })
      }
    }
  })
  return entries
}

export async function runExport(spec: ExportSpec): Promise<ExportResult> {
  await tf.ready()
  const batchSize = spec.batchSize ?? 64
  if (batchSize < 1) throw new Error(`batch size must be >= 1, got ${batchSize}`)
  const entries = listImages(spec.imagesDir)
  if (entries.length === 0) {
    throw new Error(`no .ppm/.pgm images found under ${spec.imagesDir}`)
  }
  ensureDir(spec.outDir)

  const model = buildModel(spec.modelName, 32, spec.seed ?? 1234)
  const loaded: { pixels: Float32Array; label: number }[] = []
  const skipped: string[] = []
  for (const entry of entries) {
    try {
      const image = readPpm(entry.file)
      const resized = resizeLanczos(image, model.inputSize, model.inputSize)
      loaded.push({ pixels: resized.data, label: entry.label })
    } catch (err) {
      skipped.push(`${entry.file}: ${(err as Error).message}`)
    }
  }
  if (loaded.length === 0) {
    model.dispose()
    throw new Error('every image failed to decode')
  }

  const n = loaded.length
  const tapCount = model.tapNames.length
  const pooled: Float32Array[] = []
  const dims: number[] = new Array(tapCount).fill(0)

  for (let start = 0; start < n; start += batchSize) {
    const stop = Math.min(start + batchSize, n)
    const batchPixels = new Float32Array((stop - start) * model.inputSize * model.inputSize * 3)
    for (let i = start; i < stop; i++) {
      batchPixels.set(loaded[i].pixels, (i - start) * model.inputSize * model.inputSize * 3)
    }
    const batch = tf.tensor4d(batchPixels, [stop - start, model.inputSize, model.inputSize, 3])
    const activations = model.forward(batch)
    for (let t = 0; t < tapCount; t++) {
      const pooledTensor = globalAveragePool(activations[t])
      const values = pooledTensor.dataSync() as Float32Array
      const channels = pooledTensor.shape[1]
      if (dims[t] === 0) {
        dims[t] = channels
        pooled[t] = new Float32Array(n * channels)
      }
      pooled[t].set(values, start * channels)
      pooledTensor.dispose()
      activations[t].dispose()
    }
    batch.dispose()
  }
  model.dispose()

  const layerFiles = model.tapNames.map((name) => `${name}.laod`)
  model.tapNames.forEach((name, t) => {
    const matrix: FeatureMatrix = { rows: n, cols: dims[t], data: pooled[t] }
    writeFeatures(path.join(spec.outDir, layerFiles[t]), matrix)
  })
  writeLabels(path.join(spec.outDir, 'labels.txt'), loaded.map((e) => e.label))
  const manifestPath = path.join(spec.outDir, 'manifest.json')
  writeManifest(
    manifestPath,
    n,
    model.tapNames.map((name, t) => ({ name, dim: dims[t], file: layerFiles[t] })),
    'labels.txt',
  )
  if (skipped.length > 0) {
    fs.writeFileSync(path.join(spec.outDir, 'skipped.txt'), skipped.join('\n') + '\n')
    for (const line of skipped) console.error(`skipped ${line}`)
  }
  return { manifestPath, layerNames: model.tapNames, numSamples: n, skipped }
}

/**
 * Independent check value for one tap: channel means computed by an explicit
 * scalar loop over the un-pooled activation map (no tensor reductions).
 */
export async function gapOracle(
  spec: ExportSpec,
  layerName: string,
  channel: number,
): Promise<{ layer: string; channel: number; values: number[] }> {
  await tf.ready()
  const entries = listImages(spec.imagesDir)
  const model = buildModel(spec.modelName, 32, spec.seed ?? 1234)
  const tapIndex = model.tapNames.indexOf(layerName)
  if (tapIndex < 0) throw new Error(`unknown layer ${layerName}`)

  const values: number[] = []
  for (const entry of entries) {
    const image = readPpm(entry.file)
    const resized = resizeLanczos(image, model.inputSize, model.inputSize)
    const batch = tf.tensor4d(resized.data, [1, model.inputSize, model.inputSize, 3])
    const activations = model.forward(batch)
    const act = activations[tapIndex]
    const [, h, w, c] = act.shape
    const raw = act.dataSync() as Float32Array // NHWC
    let acc = 0
    for (let x = 0; x < w; x++) {
      for (let y = 0; y < h; y++) {
        acc += raw[(y * w + x) * c + channel]
      }
    }
    values.push(acc / (h * w))
    activations.forEach((a) => a.dispose())
    batch.dispose()
  }
  model.dispose()
  return { layer: layerName, channel, values }
}

export function writeGapOracle(file: string, oracle: { layer: string; channel: number; values: number[] }): void {
  fs.writeFileSync(file, canonicalJson(oracle) + '\n')
}
