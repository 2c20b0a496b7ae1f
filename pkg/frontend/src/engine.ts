import { createHash } from "node:crypto";
import { readFile } from "node:fs/promises";

export interface GenerateRequest {
  prompt: string;
  imagePng: Buffer | null;
  temperature: number;
  maxTokens: number;
}

/** One loaded model (or a stand-in for it). */
export interface Engine {
  readonly id: string;
  readonly ready: boolean;
  load(): Promise<void>;
  generate(req: GenerateRequest): Promise<string>;
}

/**
 * Deterministic stand-in engine so the wire contract is testable without
 * model weights: answers with a fixed string, or looks the image up by
 * content hash in a table prepared from a harness manifest (see answers.ts).
 */
export class StubEngine implements Engine {
  readonly id: string;
  ready = false;
  private lookup: Record<string, string> | null = null;

  constructor(
    id: string,
    private readonly fixedAnswer?: string,
    private readonly lookupPath?: string,
  ) {
    this.id = id;
  }

  async load(): Promise<void> {
    if (this.lookupPath) {
      this.lookup = JSON.parse(await readFile(this.lookupPath, "utf-8"));
    }
    this.ready = true;
  }

  async generate(req: GenerateRequest): Promise<string> {
    if (this.lookup) {
      if (!req.imagePng) throw new Error("lookup mode needs an image");
      const key = createHash("sha256").update(req.imagePng).digest("hex");
      const hit = this.lookup[key];
      if (hit !== undefined) return hit;
      if (this.fixedAnswer !== undefined) return this.fixedAnswer;
      throw new Error(`no stub answer for image ${key.slice(0, 12)}`);
    }
    if (this.fixedAnswer !== undefined) return this.fixedAnswer;
    throw new Error("stub engine has neither an answer nor a lookup table");
  }
}

/**
 * Fronts a locally hosted OpenAI-compatible inference server (vllm,
 * llama.cpp, ...), so real open-weight models plug in behind the same
 * route without this process loading weights itself.
 */
export class ProxyEngine implements Engine {
  readonly id: string;
  ready = false;

  constructor(
    id: string,
    private readonly targetUrl: string,
  ) {
    this.id = id;
  }

  async load(): Promise<void> {
    this.ready = true;
  }

  async generate(req: GenerateRequest): Promise<string> {
    const content: unknown[] = [{ type: "text", text: req.prompt }];
    if (req.imagePng) {
      content.push({
        type: "image_url",
        image_url: { url: `data:image/png;base64,${req.imagePng.toString("base64")}` },
      });
    }
    const resp = await fetch(`${this.targetUrl.replace(/\/$/, "")}/chat/completions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({
        model: this.id,
        temperature: req.temperature,
        max_tokens: req.maxTokens,
        messages: [{ role: "user", content }],
      }),
    });
    if (!resp.ok) {
      throw new Error(`upstream ${resp.status}: ${(await resp.text()).slice(0, 200)}`);
    }
    const body = (await resp.json()) as { choices?: Array<{ message?: { content?: unknown } }> };
    const text = body.choices?.[0]?.message?.content;
    if (typeof text !== "string") throw new Error("upstream returned no text content");
    return text;
  }
}
