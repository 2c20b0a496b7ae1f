import { createHash } from "node:crypto";
import { readFile, writeFile } from "node:fs/promises";
import path from "node:path";

/**
 * Build a stub-oracle lookup table from a harness suite directory:
 * sha256 of each trial's PNG bytes -> its ground truth. The input is the
 * harness's public manifest format (JSONL rows with `image` and
 * `ground_truth` fields, images relative to the manifest).
 */
export async function buildAnswers(suiteDir: string): Promise<Record<string, string>> {
  const manifest = await readFile(path.join(suiteDir, "manifest.jsonl"), "utf-8");
  const out: Record<string, string> = {};
  for (const line of manifest.split("\n")) {
    if (!line.trim()) continue;
    const row = JSON.parse(line) as { image: string; ground_truth: string };
    const png = await readFile(path.join(suiteDir, row.image));
    out[createHash("sha256").update(png).digest("hex")] = row.ground_truth;
  }
  return out;
}

async function main(): Promise<void> {
  const [suiteDir, outPath] = process.argv.slice(2);
  if (!suiteDir || !outPath) {
    console.error("usage: node dist/answers.js <suite-dir> <answers.json>");
    process.exit(1);
  }
  const answers = await buildAnswers(suiteDir);
  await writeFile(outPath, JSON.stringify(answers, null, 0));
  console.log(`wrote ${Object.keys(answers).length} answers to ${outPath}`);
}

if (require.main === module) {
  main().catch((err) => {
    console.error(err.message);
    process.exit(1);
  });
}
