/**
 * Command-line front end. Flags mirror ExtractSpec:
 *
 *   npm run extract -- --out-dir out [--dataset glyphs-vs-apparel]
 *     [--seed 17] [--epochs 8] [--batch 128] [--weight-decay]
 *     [--checkpoint-in w.json] [--checkpoint-out w.json]
 *     [--train 1500] [--val 300] [--test 500] [--ood 500]
 */
import { DEFAULT_SPEC, extract, ExtractSpec } from "./extract.js";

function usage(): never {
  console.error(
    "usage: extract --out-dir DIR [--dataset ID] [--seed N] [--epochs N]" +
      " [--batch N] [--weight-decay] [--checkpoint-in PATH]" +
      " [--checkpoint-out PATH] [--train N] [--val N] [--test N] [--ood N]",
  );
  process.exit(2);
}

function parseArgs(argv: string[]): ExtractSpec {
  const spec: ExtractSpec = {
    ...DEFAULT_SPEC,
    counts: { ...DEFAULT_SPEC.counts },
    outDir: "",
  };
  const intFlag = (raw: string | undefined, flag: string): number => {
    const v = Number(raw);
    if (raw === undefined || !Number.isInteger(v) || v < 0) {
      console.error(`${flag} expects a nonnegative integer, got '${raw}'`);
      usage();
    }
    return v;
  };
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    switch (flag) {
      case "--out-dir":
        spec.outDir = argv[++i] ?? usage();
        break;
      case "--dataset":
        spec.dataset = argv[++i] ?? usage();
        break;
      case "--seed":
        spec.seed = intFlag(argv[++i], flag);
        break;
      case "--epochs":
        spec.epochs = intFlag(argv[++i], flag);
        break;
      case "--batch":
        spec.batchSize = intFlag(argv[++i], flag);
        break;
      case "--weight-decay":
        spec.weightDecay = true;
        break;
      case "--checkpoint-in":
        spec.checkpointIn = argv[++i] ?? usage();
        break;
      case "--checkpoint-out":
        spec.checkpointOut = argv[++i] ?? usage();
        break;
      case "--train":
        spec.counts.train = intFlag(argv[++i], flag);
        break;
      case "--val":
        spec.counts.val = intFlag(argv[++i], flag);
        break;
      case "--test":
        spec.counts.test = intFlag(argv[++i], flag);
        break;
      case "--ood":
        spec.counts.ood = intFlag(argv[++i], flag);
        break;
      default:
        console.error(`unknown flag '${flag}'`);
        usage();
    }
  }
  if (!spec.outDir) usage();
  return spec;
}

async function main(): Promise<void> {
  const spec = parseArgs(process.argv.slice(2));
  const result = await extract(spec);
  console.log(`wrote ${result.manifestPath}`);
  console.log(`classifier accuracy on held-out glyphs: ${result.accuracy.toFixed(4)}`);
  for (const [split, file] of Object.entries(result.files)) {
    console.log(`  ${split}: ${file}`);
  }
}

main().catch((err) => {
  console.error(err instanceof Error ? err.message : String(err));
  process.exit(1);
});
