export interface ShimConfig {
  host: string;
  port: number;
  model: string;
  device: string;
  engine: "stub" | "proxy";
  /** stub engine: fixed reply for every request */
  answer?: string;
  /** stub engine: JSON file mapping sha256(image bytes) -> reply */
  lookupPath?: string;
  /** proxy engine: upstream OpenAI-compatible base URL */
  targetUrl?: string;
  maxConcurrent: number;
  queueTimeoutMs: number;
  temperature: number;
  maxTokens: number;
}

const DEFAULTS: ShimConfig = {
  host: "127.0.0.1",
  port: 8711,
  model: "stub-model",
  device: "cpu",
  engine: "stub",
  maxConcurrent: 2,
  queueTimeoutMs: 30000,
  temperature: 0,
  maxTokens: 32,
};

/** CLI flags override SHIM_* environment variables override defaults. */
export function parseConfig(argv: string[], env: NodeJS.ProcessEnv = process.env): ShimConfig {
  const cfg: ShimConfig = { ...DEFAULTS };
  if (env.SHIM_PORT) cfg.port = parseInt(env.SHIM_PORT, 10);
  if (env.SHIM_HOST) cfg.host = env.SHIM_HOST;
  if (env.SHIM_MODEL) cfg.model = env.SHIM_MODEL;
  if (env.SHIM_ANSWER) cfg.answer = env.SHIM_ANSWER;
  if (env.SHIM_LOOKUP) cfg.lookupPath = env.SHIM_LOOKUP;

  for (let i = 0; i < argv.length; i++) {
    const next = () => {
      const v = argv[++i];
      if (v === undefined) throw new Error(`missing value for ${argv[i - 1]}`);
      return v;
    };
    switch (argv[i]) {
      case "--host": cfg.host = next(); break;
      case "--port": cfg.port = parseInt(next(), 10); break;
      case "--model": cfg.model = next(); break;
      case "--device": cfg.device = next(); break;
      case "--engine": {
        const v = next();
        if (v !== "stub" && v !== "proxy") throw new Error(`unknown engine ${v}`);
        cfg.engine = v;
        break;
      }
      case "--answer": cfg.answer = next(); break;
      case "--lookup": cfg.lookupPath = next(); break;
      case "--target-url": cfg.targetUrl = next(); break;
      case "--max-concurrent": cfg.maxConcurrent = parseInt(next(), 10); break;
      case "--queue-timeout-ms": cfg.queueTimeoutMs = parseInt(next(), 10); break;
      case "--temperature": cfg.temperature = parseFloat(next()); break;
      case "--max-tokens": cfg.maxTokens = parseInt(next(), 10); break;
      default:
        throw new Error(`unknown flag ${argv[i]}`);
    }
  }
  if (!Number.isInteger(cfg.maxConcurrent) || cfg.maxConcurrent < 1) {
    throw new Error("max-concurrent must be >= 1");
  }
  if (cfg.engine === "proxy" && !cfg.targetUrl) {
    throw new Error("proxy engine requires --target-url");
  }
  return cfg;
}
