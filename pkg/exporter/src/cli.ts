/**
 * export --model NAME --images DIR --out DIR [--batch 64]
 *
 * Writes one pooled feature file per tap, a manifest, and a labels file in
 * the detection toolkit's formats.
 */

import { availableModels } from './model'
import { runExport } from './export'

function usage(message?: string): never {
  if (message) console.error(`usage error: ${message}`)
  console.error(
    'usage: export --model NAME --images DIR --out DIR [--batch 64]\n' +
      `  models: ${availableModels().join(', ')}`,
  )
  process.exit(1)
}

function parseArgs(argv: string[]): { model: string; images: string; out: string; batch: number } {
  if (argv[0] === 'export') argv = argv.slice(1)
  const opts: Record<string, string> = {}
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i]
    if (!flag.startsWith('--')) usage(`unexpected argument ${flag}`)
    const value = argv[i + 1]
    if (value === undefined) usage(`missing value for ${flag}`)
    opts[flag.slice(2)] = value
  }
  for (const key of Object.keys(opts)) {
    if (!['model', 'images', 'out', 'batch'].includes(key)) usage(`unknown flag --${key}`)
  }
  for (const key of ['model', 'images', 'out']) {
    if (!(key in opts)) usage(`--${key} is required`)
  }
  const batch = opts.batch === undefined ? 64 : parseInt(opts.batch, 10)
  if (!Number.isFinite(batch) || batch < 1) usage(`--batch must be a positive integer`)
  return { model: opts.model, images: opts.images, out: opts.out, batch }
}

async function main(): Promise<void> {
  const args = parseArgs(process.argv.slice(2))
  try {
    const result = await runExport({
      modelName: args.model,
      imagesDir: args.images,
      outDir: args.out,
      batchSize: args.batch,
    })
    console.log(`manifest ${result.manifestPath}`)
    console.log(`layers ${result.layerNames.length} samples ${result.numSamples}`)
    if (result.skipped.length > 0) console.log(`skipped ${result.skipped.length}`)
  } catch (err) {
    console.error(`error: ${(err as Error).message}`)
    process.exit(2)
  }
}

void main()
