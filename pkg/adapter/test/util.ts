/** Helpers to spawn the primary (Python) server for interop tests. */

import { ChildProcess, spawn } from "child_process";
import * as fs from "fs";
import * as os from "os";
import * as path from "path";

export interface PrimaryServer {
  proc: ChildProcess;
  host: string;
  port: number;
}

export async function spawnPrimary(args: string[] = ["--agent", "echo"],
                                   timeoutMs = 30000): Promise<PrimaryServer> {
  const portFile = path.join(os.tmpdir(),
                             `adapter-test-port-${process.pid}-${Math.random().toString(36).slice(2)}`);
  const proc = spawn("python3",
                     ["-m", "policyserve", "serve", "--bind", "127.0.0.1:0",
                      "--port-file", portFile, ...args],
                     { stdio: ["ignore", "ignore", "pipe"] });
  let stderr = "";
  proc.stderr?.on("data", (d) => { stderr += d.toString(); });
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (fs.existsSync(portFile)) {
      const text = fs.readFileSync(portFile, "utf-8").trim();
      if (text) {
        fs.unlinkSync(portFile);
        const idx = text.lastIndexOf(":");
        return { proc, host: text.slice(0, idx), port: parseInt(text.slice(idx + 1), 10) };
      }
    }
    if (proc.exitCode !== null) {
      throw new Error(`primary server exited early (${proc.exitCode}): ${stderr}`);
    }
    await new Promise((r) => setTimeout(r, 50));
  }
  proc.kill();
  throw new Error(`primary server did not report its port: ${stderr}`);
}

export function stopPrimary(server: PrimaryServer): Promise<void> {
  return new Promise((resolve) => {
    server.proc.once("exit", () => resolve());
    server.proc.kill("SIGTERM");
    setTimeout(() => {
      if (server.proc.exitCode === null) server.proc.kill("SIGKILL");
    }, 5000).unref();
  });
}
