/**
 * End-to-end extraction: build the glyph corpora, train (or load) the
 * classifier, push every split through the penultimate layer, and write
 * AVF1 feature files plus a JSON manifest for the downstream toolkit.
 */
import * as fs from "node:fs";
import * as path from "node:path";
import { writeAvf1 } from "./avf1.js";
import {
  apparelCorpus,
  Corpus,
  digitCorpus,
  N_CLASSES,
} from "./glyphs.js";
import { GlyphClassifier, HIDDEN_WIDTH } from "./model.js";

export interface ExtractSpec {
  dataset: string; // registered corpus pair id
  outDir: string;
  seed: number;
  /** load weights from here instead of training */
  checkpointIn?: string;
  /** after training, persist weights here */
  checkpointOut?: string;
  weightDecay: boolean;
  epochs: number;
  batchSize: number;
  counts: { train: number; val: number; test: number; ood: number };
}

export interface ExtractResult {
  manifestPath: string;
  files: { train: string; val: string; test: string; ood: string };
  accuracy: number;
}

export const DEFAULT_SPEC: Omit<ExtractSpec, "outDir"> = {
  dataset: "glyphs-vs-apparel",
  seed: 17,
  weightDecay: false,
  epochs: 8,
  batchSize: 128,
  counts: { train: 1500, val: 300, test: 500, ood: 500 },
};

const WEIGHT_DECAY_L2 = 1e-4;

interface CorpusPair {
  id: (n: number, seed: number) => Corpus;
  ood: (n: number, seed: number) => Corpus;
}

const DATASETS: Record<string, CorpusPair> = {
  "glyphs-vs-apparel": { id: digitCorpus, ood: apparelCorpus },
};

export async function extract(spec: ExtractSpec): Promise<ExtractResult> {
  const pair = DATASETS[spec.dataset];
  if (!pair) {
    throw new Error(
      `unknown dataset '${spec.dataset}', expected one of: ${Object.keys(DATASETS).join(", ")}`,
    );
  }
  fs.mkdirSync(spec.outDir, { recursive: true });

  // Disjoint seeds per split keep the draws independent of each other.
  const train = pair.id(spec.counts.train, spec.seed);
  const val = pair.id(spec.counts.val, spec.seed + 1);
  const test = pair.id(spec.counts.test, spec.seed + 2);
  const ood = pair.ood(spec.counts.ood, spec.seed + 3);

  const clf = new GlyphClassifier(spec.seed, spec.weightDecay ? WEIGHT_DECAY_L2 : 0);
  if (spec.checkpointIn) {
    clf.loadCheckpoint(spec.checkpointIn);
  } else {
    await clf.train(train, {
      epochs: spec.epochs,
      batchSize: spec.batchSize,
      seed: spec.seed + 4,
    });
  }
  if (spec.checkpointOut) {
    await clf.saveCheckpoint(spec.checkpointOut);
  }

  const accuracy = await clf.accuracy(test);

  const files = {
    train: path.join(spec.outDir, "train.avf"),
    val: path.join(spec.outDir, "val.avf"),
    test: path.join(spec.outDir, "test.avf"),
    ood: path.join(spec.outDir, "ood.avf"),
  };
  for (const [name, corpus] of [
    ["train", train],
    ["val", val],
    ["test", test],
    ["ood", ood],
  ] as const) {
    const feats = await clf.features(corpus);
    writeAvf1(files[name], {
      features: feats,
      labels: corpus.labels,
      n: corpus.n,
      h: HIDDEN_WIDTH,
      nClasses: N_CLASSES,
    });
  }

  const manifest = {
    dataset: spec.dataset,
    feature_dim: HIDDEN_WIDTH,
    n_classes: N_CLASSES,
    counts: spec.counts,
    seed: spec.seed,
    weight_decay: spec.weightDecay,
    classifier_accuracy: accuracy,
    final_layer_weight: await clf.finalLayerWeight(),
    final_layer_bias: await clf.finalLayerBias(),
    files,
  };
  const manifestPath = path.join(spec.outDir, "manifest.json");
  fs.writeFileSync(manifestPath, JSON.stringify(manifest, null, 2) + "\n");

  return { manifestPath, files, accuracy };
}
