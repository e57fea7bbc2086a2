import * as fs from 'fs'
import * as path from 'path'

import { RgbImage, writePpm } from '../src/ppm'

export function makeImage(
  width: number,
  height: number,
  fn: (x: number, y: number) => [number, number, number],
): RgbImage {
  const data = new Float32Array(width * height * 3)
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const [r, g, b] = fn(x, y)
      const i = 3 * (y * width + x)
      data[i] = r
      data[i + 1] = g
      data[i + 2] = b
    }
  }
  return { width, height, data }
}

/** Ten deterministic images of assorted sizes and content. */
export function writeImageCorpus(dir: string): string[] {
  fs.mkdirSync(dir, { recursive: true })
  const specs: [number, number, (x: number, y: number) => [number, number, number]][] = [
    [64, 64, (x, y) => [x / 63, y / 63, 0.5]],
    [48, 48, () => [0, 0, 0]],
    [100, 80, () => [1, 1, 1]],
    [32, 32, (x, y) => [(x + y) % 2, 0.2, 0.8]],
    [57, 41, (x, y) => [Math.abs(Math.sin(x * 0.3)), Math.abs(Math.cos(y * 0.2)), 0.1]],
    [64, 64, (x, y) => [0.9, x / 63, y / 63]],
    [80, 80, (x, y) => [x > 40 ? 1 : 0, y > 40 ? 1 : 0, 0.5]],
    [33, 65, () => [0.3, 0.6, 0.9]],
    [128, 128, (x, y) => [(((x / 16) | 0) + ((y / 16) | 0)) % 2, 0.5, 0.2]],
    [40, 40, (x, y) => [(x * y) / (39 * 39), 0.7, 0.4]],
  ]
  const files: string[] = []
  specs.forEach(([w, h, fn], i) => {
    const file = path.join(dir, `img${String(i).padStart(2, '0')}.ppm`)
    writePpm(file, makeImage(w, h, fn))
    files.push(file)
  })
  return files
}
