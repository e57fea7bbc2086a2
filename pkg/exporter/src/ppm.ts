/**
 * Minimal PPM/PGM reader plus Lanczos resampling to the export resolution.
 *
 * P6 (binary RGB) and P5 (binary grayscale, expanded to RGB) with maxval 255
 * cover the test corpus without an image-codec dependency.
 */

import * as fs from 'fs'

export interface RgbImage {
  width: number
  height: number
  /** interleaved RGB, values in [0, 1], length width*height*3 */
  data: Float32Array
}

export function readPpm(file: string): RgbImage {
  const buf = fs.readFileSync(file)
  let pos = 0

  const token = (): string => {
    // skip whitespace and '#' comments
    for (;;) {
      while (pos < buf.length && /\s/.test(String.fromCharCode(buf[pos]))) pos++
      if (pos < buf.length && buf[pos] === 0x23 /* # */) {
        while (pos < buf.length && buf[pos] !== 0x0a) pos++
      } else {
        break
      }
    }
    const start = pos
    while (pos < buf.length && !/\s/.test(String.fromCharCode(buf[pos]))) pos++
    return buf.toString('ascii', start, pos)
  }

  const magic = token()
  if (magic !== 'P6' && magic !== 'P5') {
    throw new Error(`${file}: unsupported netpbm magic ${JSON.stringify(magic)}`)
  }
  const width = parseInt(token(), 10)
  const height = parseInt(token(), 10)
  const maxval = parseInt(token(), 10)
  if (!(width > 0 && height > 0)) throw new Error(`${file}: bad dimensions`)
  if (maxval !== 255) throw new Error(`${file}: only maxval 255 supported, got ${maxval}`)
  pos++ // single whitespace byte after the header

  const channels = magic === 'P6' ? 3 : 1
  const needed = width * height * channels
  if (buf.length - pos < needed) {
    throw new Error(`${file}: truncated pixel payload`)
  }
  const data = new Float32Array(width * height * 3)
  for (let i = 0; i < width * height; i++) {
    if (channels === 3) {
      data[3 * i] = buf[pos + 3 * i] / 255
      data[3 * i + 1] = buf[pos + 3 * i + 1] / 255
      data[3 * i + 2] = buf[pos + 3 * i + 2] / 255
    } else {
      const v = buf[pos + i] / 255
      data[3 * i] = v
      data[3 * i + 1] = v
      data[3 * i + 2] = v
    }
  }
  return { width, height, data }
}

export function writePpm(file: string, image: RgbImage): void {
  const header = Buffer.from(`P6\n${image.width} ${image.height}\n255\n`, 'ascii')
  const pixels = Buffer.alloc(image.width * image.height * 3)
  for (let i = 0; i < pixels.length; i++) {
    pixels[i] = Math.max(0, Math.min(255, Math.round(image.data[i] * 255)))
  }
  fs.writeFileSync(file, Buffer.concat([header, pixels]))
}

const LANCZOS_A = 3

function lanczos(x: number): number {
  if (x === 0) return 1
  const ax = Math.abs(x)
  if (ax >= LANCZOS_A) return 0
  const pix = Math.PI * x
  return (LANCZOS_A * Math.sin(pix) * Math.sin(pix / LANCZOS_A)) / (pix * pix)
}

interface Taps {
  start: number
  weights: number[]
}

function buildTaps(srcSize: number, dstSize: number): Taps[] {
  const scale = srcSize / dstSize
  const support = scale > 1 ? LANCZOS_A * scale : LANCZOS_A
  const taps: Taps[] = []
  for (let d = 0; d < dstSize; d++) {
    const center = (d + 0.5) * scale - 0.5
    const start = Math.max(0, Math.ceil(center - support))
    const stop = Math.min(srcSize - 1, Math.floor(center + support))
    const weights: number[] = []
    let sum = 0
    for (let s = start; s <= stop; s++) {
      const w = lanczos((s - center) / (scale > 1 ? scale : 1))
      weights.push(w)
      sum += w
    }
    taps.push({ start, weights: weights.map((w) => w / sum) })
  }
  return taps
}

/** Separable Lanczos-3 resample; output values clamped back to [0, 1]. */
export function resizeLanczos(image: RgbImage, dstWidth: number, dstHeight: number): RgbImage {
  const hTaps = buildTaps(image.width, dstWidth)
  const vTaps = buildTaps(image.height, dstHeight)

  // horizontal pass
  const mid = new Float32Array(dstWidth * image.height * 3)
  for (let y = 0; y < image.height; y++) {
    for (let x = 0; x < dstWidth; x++) {
      const { start, weights } = hTaps[x]
      for (let c = 0; c < 3; c++) {
        let acc = 0
        for (let k = 0; k < weights.length; k++) {
          acc += weights[k] * image.data[3 * (y * image.width + start + k) + c]
        }
        mid[3 * (y * dstWidth + x) + c] = acc
      }
    }
  }

  // vertical pass
  const out = new Float32Array(dstWidth * dstHeight * 3)
  for (let y = 0; y < dstHeight; y++) {
    const { start, weights } = vTaps[y]
    for (let x = 0; x < dstWidth; x++) {
      for (let c = 0; c < 3; c++) {
        let acc = 0
        for (let k = 0; k < weights.length; k++) {
          acc += weights[k] * mid[3 * ((start + k) * dstWidth + x) + c]
        }
        out[3 * (y * dstWidth + x) + c] = Math.max(0, Math.min(1, acc))
      }
    }
  }
  return { width: dstWidth, height: dstHeight, data: out }
}
