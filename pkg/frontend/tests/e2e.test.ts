/** Drives fixture episodes end to end through the web client against the
 * live session service. Requires the Python package (`collabsim`) on PATH.
 */

import { execFileSync, spawn, ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { WebSocket } from "ws";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { SessionClient, SocketLike } from "../src/client.js";
import { render } from "../src/render.js";
import { Composition } from "../src/grammar.js";
import { ReportMessage, SessionInitMessage } from "../src/protocol.js";

const wsFactory = (url: string) => new WebSocket(url) as unknown as SocketLike;

function parseCall(text: string): Composition {
  const match = /^([A-Za-z]+)\[(.*)\]$/.exec(text);
  if (!match) throw new Error(`bad call ${text}`);
  const args = match[2] === "" ? [] : match[2].split(",").map((a) => a.trim());
  return { skill: match[1], args };
}

interface EpisodePlan {
  episode: string;
  human: string[];
  all: string[];
}

function generateDataset(dir: string, seed: number): EpisodePlan {
  execFileSync("collabsim", [
    "gen-fixtures", "--scene", "bundled", "--type", "temporal",
    "--count", "1", "--seed", String(seed), "--out", dir,
  ]);
  const helper = `
import json, sys
from collabsim.fixtures import bundled_scene, witness_plan
from collabsim.sceneio import load_episode

scene = bundled_scene()
episode = load_episode(sys.argv[1])
plan = witness_plan(scene, episode)
human, everything = [], []
for li, layer in enumerate(plan.layers):
    for ji, job in enumerate(layer):
        for call in job.calls:
            everything.append(call.to_string())
            if plan.assignments[(li, ji)] == "agent_1":
                human.append(call.to_string())
print(json.dumps({"episode": episode.name, "human": human, "all": everything}))
`;
  const output = execFileSync("python3", ["-c", helper, join(dir, "temporal_000.episode")]);
  return JSON.parse(output.toString()) as EpisodePlan;
}

async function startServer(dir: string, partner: string, port: number): Promise<ChildProcess> {
  const server = spawn(
    "collabsim",
    ["serve", "--dataset", dir, "--partner", partner,
     "--port", String(port), "--tick-hz", "0"],
    { stdio: "ignore" }
  );
  const deadline = Date.now() + 30000;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`http://127.0.0.1:${port}/health`);
      if (response.ok) return server;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 150));
  }
  server.kill();
  throw new Error("session service did not come up");
}

describe("live episode through the web client", () => {
  const dir = mkdtempSync(join(tmpdir(), "collabsim-e2e-"));
  const port = 18000 + (process.pid % 2000);
  let plan: EpisodePlan;
  const servers: ChildProcess[] = [];

  beforeAll(async () => {
    plan = generateDataset(dir, 77);
  });

  afterAll(() => {
    for (const server of servers) server.kill();
  });

  it("completes a fixture episode against the expert partner", async () => {
    servers.push(await startServer(dir, "expert", port));
    const client = new SessionClient(wsFactory);
    await client.connect(`ws://127.0.0.1:${port}/session`);
    const init = (await client.nextMessage("session_init")) as SessionInitMessage;
    expect(init.episode).toBe(plan.episode);
    expect(render(client.store.state)).toContain(init.instruction);

    for (const text of plan.human) {
      const outcome = await client.sendCommand(parseCall(text));
      expect(outcome.kind).toBe("result");
      expect((outcome as { status: string }).status).toBe("success");
    }
    const report = (await client.sendCommand({ skill: "Done", args: [] })) as ReportMessage;
    expect(report.kind).toBe("report");
    expect(report.success).toBe(true);
    expect(report.percent_complete).toBe(1.0);

    const html = render(client.store.state);
    expect(html).toContain("Success — PC 100%");
    client.close();
  }, 120000);

  it("surfaces ordering feedback and permits exactly 3 retries", async () => {
    servers.push(await startServer(dir, "none", port + 1));
    const client = new SessionClient(wsFactory);
    await client.connect(`ws://127.0.0.1:${port + 1}/session`);
    await client.nextMessage("session_init");

    // deliberately execute the two temporal layers in reverse
    const reversed = [...plan.all].reverse();
    for (const text of reversed) {
      await client.sendCommand(parseCall(text));
    }
    let report = (await client.sendCommand({ skill: "Done", args: [] })) as ReportMessage;
    expect(report.success).toBe(false);
    expect(report.explanation).toContain("out of temporal order");
    let html = render(client.store.state);
    expect(html).toContain("out of temporal order");
    expect(html).toContain("Retry (3 left)");

    // retry #1: do it in order this time and succeed
    const initAgain = await client.sendRetry();
    expect(initAgain.kind).toBe("session_init");
    expect(client.store.state.retriesLeft).toBe(2);
    for (const text of plan.all) {
      await client.sendCommand(parseCall(text));
    }
    report = (await client.sendCommand({ skill: "Done", args: [] })) as ReportMessage;
    expect(report.success).toBe(true);

    // retries #2 and #3 are still permitted; a fourth is refused
    for (const expectedLeft of [1, 0]) {
      expect((await client.sendRetry()).kind).toBe("session_init");
      expect(client.store.state.retriesLeft).toBe(expectedLeft);
      await client.sendCommand({ skill: "Done", args: [] });
    }
    const refused = await client.sendRetry();
    expect(refused.kind).toBe("error");
    expect((refused as { error: string }).error).toContain("no retries left");
    expect(render(client.store.state)).toContain("No retries left");
    client.close();
  }, 120000);

  it("mirror grammar matches the live server dump", async () => {
    const response = await fetch(`http://127.0.0.1:${port}/grammar`);
    const dump = (await response.json()) as { human: string };
    const { parseGrammarDump, validateCall, composeCall } = await import("../src/grammar.js");
    const sets = parseGrammarDump(dump.human);
    // the composed human share is valid under the live terminals
    for (const text of plan.human) {
      expect(validateCall(text, sets, sets.skills)).toBe(true);
      expect(composeCall(parseCall(text))).toBe(text);
    }
  }, 60000);
});
