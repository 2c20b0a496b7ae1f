import express from "express";
import type { Express, Request, Response } from "express";
import http from "node:http";

import { parseConfig, ShimConfig } from "./config";
import { Engine, GenerateRequest, ProxyEngine, StubEngine } from "./engine";
import { WorkQueue } from "./queue";

interface ParsedChatRequest {
  prompt: string;
  imagePng: Buffer | null;
}

/** Pull the text prompt and (optional) PNG data URL out of a
 * chat-completions request body; throws on anything malformed. */
export function parseChatBody(body: unknown): ParsedChatRequest {
  if (typeof body !== "object" || body === null) throw new Error("body must be a JSON object");
  const messages = (body as { messages?: unknown }).messages;
  if (!Array.isArray(messages) || messages.length === 0) {
    throw new Error("'messages' must be a non-empty array");
  }
  const texts: string[] = [];
  let imagePng: Buffer | null = null;
  for (const message of messages) {
    const content = (message as { content?: unknown }).content;
    if (typeof content === "string") {
      texts.push(content);
      continue;
    }
    if (!Array.isArray(content)) throw new Error("message content must be a string or array");
    for (const part of content) {
      const type = (part as { type?: unknown }).type;
      if (type === "text") {
        const text = (part as { text?: unknown }).text;
        if (typeof text !== "string") throw new Error("text part without string text");
        texts.push(text);
      } else if (type === "image_url") {
        const url = (part as { image_url?: { url?: unknown } }).image_url?.url;
        if (typeof url !== "string") throw new Error("image_url part without url");
        const match = /^data:image\/png;base64,(.+)$/s.exec(url);
        if (!match) throw new Error("only data:image/png;base64 URLs are supported");
        imagePng = Buffer.from(match[1], "base64");
      } else {
        throw new Error(`unsupported content part type ${String(type)}`);
      }
    }
  }
  const prompt = texts.join("\n").trim();
  if (!prompt) throw new Error("request carries no text prompt");
  return { prompt, imagePng };
}

export function buildEngine(cfg: ShimConfig): Engine {
  if (cfg.engine === "proxy") return new ProxyEngine(cfg.model, cfg.targetUrl!);
  return new StubEngine(cfg.model, cfg.answer, cfg.lookupPath);
}

export function createApp(cfg: ShimConfig, engine: Engine): Express {
  const app = express();
  app.use(express.json({ limit: "32mb" }));
  const queue = new WorkQueue(cfg.maxConcurrent, cfg.queueTimeoutMs);
  let served = 0;

  app.get("/health", (_req: Request, res: Response) => {
    const payload = {
      model: engine.id,
      ready: engine.ready,
      in_flight: queue.inFlight,
      queued: queue.depth,
      served,
    };
    res.status(engine.ready ? 200 : 503).json(payload);
  });

  app.post("/v1/chat/completions", async (req: Request, res: Response) => {
    if (!engine.ready) {
      res.status(503).json({ error: { message: "model is still loading" } });
      return;
    }
    let parsed: ParsedChatRequest;
    try {
      parsed = parseChatBody(req.body);
    } catch (err) {
      res.status(400).json({ error: { message: (err as Error).message } });
      return;
    }
    const body = req.body as { temperature?: number; max_tokens?: number; model?: string };
    const genReq: GenerateRequest = {
      prompt: parsed.prompt,
      imagePng: parsed.imagePng,
      temperature: body.temperature ?? cfg.temperature,
      maxTokens: body.max_tokens ?? cfg.maxTokens,
    };
    try {
      const text = await queue.run(() => engine.generate(genReq));
      served++;
      res.json({
        id: `shim-${Date.now()}-${served}`,
        object: "chat.completion",
        created: Math.floor(Date.now() / 1000),
        model: body.model ?? engine.id,
        choices: [
          {
            index: 0,
            message: { role: "assistant", content: text },
            finish_reason: "stop",
          },
        ],
        usage: { prompt_tokens: 0, completion_tokens: 0, total_tokens: 0 },
      });
    } catch (err) {
      res.status(500).json({ error: { message: `inference failed: ${(err as Error).message}` } });
    }
  });

  return app;
}

export interface RunningShim {
  server: http.Server;
  port: number;
  close(): Promise<void>;
}

/** Start the shim; the engine loads in the background so /health reports
 * 503 until it is ready. Port 0 picks an ephemeral port. */
export async function startShim(cfg: ShimConfig, engine?: Engine): Promise<RunningShim> {
  const eng = engine ?? buildEngine(cfg);
  const app = createApp(cfg, eng);
  const server = await new Promise<http.Server>((resolve, reject) => {
    const s = app.listen(cfg.port, cfg.host, () => resolve(s));
    s.on("error", reject);
  });
  void eng.load().catch((err) => {
    console.error(`engine load failed: ${(err as Error).message}`);
  });
  const address = server.address();
  const port = typeof address === "object" && address ? address.port : cfg.port;
  return {
    server,
    port,
    close: () =>
      new Promise<void>((resolve, reject) =>
        server.close((err) => (err ? reject(err) : resolve())),
      ),
  };
}

async function main(): Promise<void> {
  const cfg = parseConfig(process.argv.slice(2));
  const shim = await startShim(cfg);
  console.log(`modelshim (${cfg.engine}:${cfg.model}) listening on ${cfg.host}:${shim.port}`);
  const stop = () => {
    void shim.close().then(() => process.exit(0));
  };
  process.on("SIGINT", stop);
  process.on("SIGTERM", stop);
}

if (require.main === module) {
  main().catch((err) => {
    console.error(err.message);
    process.exit(1);
  });
}
