/**
 * Small MLP classifier over 16x16 glyph images with access to the
 * penultimate post-ReLU layer, which is what gets exported as features.
 */
import * as tf from "@tensorflow/tfjs";
import * as fs from "node:fs";
import { Rng } from "./rng.js";
import { Corpus, N_CLASSES, PIXELS } from "./glyphs.js";

export const HIDDEN_WIDTH = 32;

export interface TrainOptions {
  epochs: number;
  batchSize: number;
  seed: number;
  learningRate?: number;
}

export class GlyphClassifier {
  readonly model: tf.LayersModel;
  readonly featureModel: tf.LayersModel;
  readonly weightDecay: number;

  constructor(seed: number, weightDecay = 0) {
    this.weightDecay = weightDecay;
    const input = tf.input({ shape: [PIXELS] });
    const hidden = tf.layers
      .dense({
        units: HIDDEN_WIDTH,
        activation: "relu",
        kernelInitializer: tf.initializers.glorotUniform({ seed }),
        name: "hidden",
      })
      .apply(input) as tf.SymbolicTensor;
    const logits = tf.layers
      .dense({
        units: N_CLASSES,
        kernelInitializer: tf.initializers.glorotUniform({ seed: seed + 1 }),
        name: "logits",
      })
      .apply(hidden) as tf.SymbolicTensor;
    this.model = tf.model({ inputs: input, outputs: logits });
    this.featureModel = tf.model({ inputs: input, outputs: hidden });
  }

  /** l2 penalty over the kernel matrices, 0 when weight decay is off */
  private kernelPenalty(): tf.Scalar {
    const kernels = this.model.trainableWeights.filter((w) =>
      w.name.includes("kernel"),
    );
    const terms = kernels.map((w) => tf.sum(tf.square(w.read())));
    return tf.mul(this.weightDecay, tf.addN(terms)) as tf.Scalar;
  }

  /**
   * Plain minibatch SGD loop with an explicit seeded shuffle so two runs
   * with the same seed walk through identical batches.
   */
  async train(corpus: Corpus, opts: TrainOptions): Promise<number[]> {
    const optimizer = tf.train.adam(opts.learningRate ?? 1e-3);
    const lossPerEpoch: number[] = [];
    const shuffle = new Rng(opts.seed);
    const x = tf.tensor2d(corpus.images, [corpus.n, PIXELS]);
    const yHot = tf.oneHot(tf.tensor1d(corpus.labels, "int32"), N_CLASSES);
    try {
      for (let epoch = 0; epoch < opts.epochs; epoch++) {
        const order = shuffle.permutation(corpus.n);
        const orderT = tf.tensor1d(order, "int32");
        const xs = tf.gather(x, orderT);
        const ys = tf.gather(yHot, orderT);
        let lossSum = 0;
        let batches = 0;
        for (let start = 0; start < corpus.n; start += opts.batchSize) {
          const size = Math.min(opts.batchSize, corpus.n - start);
          const xb = tf.slice(xs, [start, 0], [size, PIXELS]);
          const yb = tf.slice(ys, [start, 0], [size, N_CLASSES]);
          const loss = optimizer.minimize(
            () => {
              const logits = this.model.apply(xb, { training: true }) as tf.Tensor;
              const ce = tf.losses.softmaxCrossEntropy(yb, logits) as tf.Scalar;
              return this.weightDecay > 0
                ? (tf.add(ce, this.kernelPenalty()) as tf.Scalar)
                : ce;
            },
            true,
          ) as tf.Scalar;
          lossSum += (await loss.data())[0];
          batches += 1;
          tf.dispose([xb, yb, loss]);
        }
        tf.dispose([orderT, xs, ys]);
        lossPerEpoch.push(lossSum / batches);
      }
    } finally {
      tf.dispose([x, yHot]);
      optimizer.dispose();
    }
    return lossPerEpoch;
  }

  async accuracy(corpus: Corpus): Promise<number> {
    const x = tf.tensor2d(corpus.images, [corpus.n, PIXELS]);
    const logits = this.model.predict(x) as tf.Tensor;
    const pred = tf.argMax(logits, 1);
    const predData = await pred.data();
    tf.dispose([x, logits, pred]);
    let hits = 0;
    for (let i = 0; i < corpus.n; i++) {
      if (predData[i] === corpus.labels[i]) hits += 1;
    }
    return hits / corpus.n;
  }

  /** penultimate post-ReLU activations, n x HIDDEN_WIDTH */
  async features(corpus: Corpus): Promise<Float32Array> {
    const x = tf.tensor2d(corpus.images, [corpus.n, PIXELS]);
    const h = this.featureModel.predict(x) as tf.Tensor;
    const out = new Float32Array(await h.data());
    tf.dispose([x, h]);
    return out;
  }

  /** classifier head weight as a C x H nested array (rows are classes) */
  async finalLayerWeight(): Promise<number[][]> {
    const kernel = this.model.getLayer("logits").getWeights()[0]; // H x C
    const data = await kernel.data();
    const [h, c] = kernel.shape as [number, number];
    const rows: number[][] = [];
    for (let j = 0; j < c; j++) {
      const row: number[] = [];
      for (let i = 0; i < h; i++) row.push(data[i * c + j]);
      rows.push(row);
    }
    return rows;
  }

  async finalLayerBias(): Promise<number[]> {
    const bias = this.model.getLayer("logits").getWeights()[1];
    return Array.from(await bias.data());
  }

  async saveCheckpoint(path: string): Promise<void> {
    const weights = this.model.getWeights();
    const payload = {
      hidden_width: HIDDEN_WIDTH,
      n_classes: N_CLASSES,
      tensors: await Promise.all(
        weights.map(async (w) => ({
          shape: w.shape,
          values: Array.from(await w.data()),
        })),
      ),
    };
    fs.writeFileSync(path, JSON.stringify(payload));
  }

  loadCheckpoint(path: string): void {
    const payload = JSON.parse(fs.readFileSync(path, "utf-8"));
    const tensors = payload.tensors.map(
      (t: { shape: number[]; values: number[] }) => tf.tensor(t.values, t.shape),
    );
    this.model.setWeights(tensors);
    tf.dispose(tensors);
  }
}
