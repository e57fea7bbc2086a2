/**
 * Convolutional backbones with one feature tap per post-convolution ReLU.
 *
 * The VGG-16-class stack has 13 taps (conv widths 64,64 / 128,128 /
 * 256,256,256 / 512,512,512 / 512,512,512 with 2x2 max-pooling between
 * blocks). Weights are seeded Glorot draws: pretrained checkpoints are not
 * fetchable in this environment, and the export contract (layer order,
 * shapes, pooling, file formats) is independent of the weight values.
 */

import * as tf from '@tensorflow/tfjs'

export interface TapModel {
  name: string
  inputSize: number
  tapNames: string[]
  /** forward pass returning one [batch, h, w, c] activation per tap */
  forward(input: tf.Tensor4D): tf.Tensor4D[]
  dispose(): void
}

interface ConvSpec {
  blocks: number[][] // filters per conv, grouped by pooling block
}

const ARCHITECTURES: Record<string, ConvSpec> = {
  // canonical 13-conv configuration
  vgg16: { blocks: [[64, 64], [128, 128], [256, 256, 256], [512, 512, 512], [512, 512, 512]] },
  // same topology at quarter width: 13 taps, far cheaper on a CPU backend
  'vgg16-slim': { blocks: [[16, 16], [32, 32], [64, 64, 64], [128, 128, 128], [128, 128, 128]] },
}

export function availableModels(): string[] {
  return Object.keys(ARCHITECTURES)
}

export function buildModel(name: string, inputSize = 32, seed = 1234): TapModel {
  const spec = ARCHITECTURES[name]
  if (!spec) {
    throw new Error(`unknown model ${JSON.stringify(name)}; available: ${availableModels().join(', ')}`)
  }
  const input = tf.input({ shape: [inputSize, inputSize, 3] })
  const taps: tf.SymbolicTensor[] = []
  const tapNames: string[] = []
  let x: tf.SymbolicTensor = input
  let convIndex = 0
  for (let b = 0; b < spec.blocks.length; b++) {
    for (const filters of spec.blocks[b]) {
      convIndex++
      x = tf.layers
        .conv2d({
          filters,
          kernelSize: 3,
          padding: 'same',
          activation: 'relu',
          kernelInitializer: tf.initializers.glorotUniform({ seed: seed + convIndex }),
          biasInitializer: 'zeros',
          name: `conv${convIndex}`,
        })
        .apply(x) as tf.SymbolicTensor
      taps.push(x)
      tapNames.push(`C${convIndex}`)
    }
    if (b < spec.blocks.length - 1) {
      x = tf.layers
        .maxPooling2d({ poolSize: 2, strides: 2, name: `pool${b + 1}` })
        .apply(x) as tf.SymbolicTensor
    }
  }
  const model = tf.model({ inputs: input, outputs: taps })
  return {
    name,
    inputSize,
    tapNames,
    forward(batch: tf.Tensor4D): tf.Tensor4D[] {
      const out = model.predict(batch)
      return (Array.isArray(out) ? out : [out]) as tf.Tensor4D[]
    },
    dispose() {
      model.dispose()
    },
  }
}

/** Spatial mean per channel: [batch, h, w, c] -> [batch, c]. */
export function globalAveragePool(activation: tf.Tensor4D): tf.Tensor2D {
  return activation.mean([1, 2]) as tf.Tensor2D
}
