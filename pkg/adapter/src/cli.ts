#!/usr/bin/env node
/** adapter-host: serve an agent as a protocol backend over TCP. */

import { Agent, BUILTIN_AGENTS } from "./agent";
import { BackendHost } from "./host";

function parseArgs(argv: string[]) {
  const out: Record<string, string> = { bind: "127.0.0.1:0", agent: "echo" };
  const extras: string[] = [];
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === "--bind" || arg === "--agent") {
      out[arg.slice(2)] = argv[++i];
    } else if (arg === "--agent-arg") {
      extras.push(argv[++i]);
    } else if (arg === "--help" || arg === "-h") {
      console.log("usage: adapter-host --bind HOST:PORT --agent {echo|module:factory} "
        + "[--agent-arg k=v ...]");
      process.exit(0);
    } else {
      console.error(`unknown argument ${arg}`);
      process.exit(2);
    }
  }
  const agentArgs: Record<string, string> = {};
  for (const pair of extras) {
    const idx = pair.indexOf("=");
    if (idx < 0) {
      console.error(`--agent-arg expects k=v, got ${pair}`);
      process.exit(2);
    }
    agentArgs[pair.slice(0, idx)] = pair.slice(idx + 1);
  }
  return { ...out, agentArgs } as { bind: string; agent: string; agentArgs: Record<string, string> };
}

async function makeAgent(spec: string, args: Record<string, string>): Promise<Agent> {
  if (spec in BUILTIN_AGENTS) {
    return BUILTIN_AGENTS[spec](args);
  }
  const idx = spec.lastIndexOf(":");
  if (idx < 0) {
    throw new Error(`unknown agent ${spec}; use a builtin (${Object.keys(BUILTIN_AGENTS)}) `
      + "or module:factory");
  }
  const mod = await import(spec.slice(0, idx));
  const factory = mod[spec.slice(idx + 1)];
  if (typeof factory !== "function") {
    throw new Error(`${spec} does not name a factory function`);
  }
  return factory(args);
}

async function main() {
  const { bind, agent: agentSpec, agentArgs } = parseArgs(process.argv.slice(2));
  const sep = bind.lastIndexOf(":");
  const host = bind.slice(0, sep);
  const port = parseInt(bind.slice(sep + 1), 10);
  const agent = await makeAgent(agentSpec, agentArgs);
  const hostServer = await BackendHost.serve(agent, { host, port });
  const addr = hostServer.address();
  console.log(`listening on ${addr.host}:${addr.port}`);
  const stop = () => hostServer.close().then(() => process.exit(0));
  process.on("SIGINT", stop);
  process.on("SIGTERM", stop);
}

main().catch((e) => {
  console.error(`error: ${e.message}`);
  process.exit(1);
});
