// End-to-end check against a real service process: two simulated
// annotators rate every video through the typed client, a double-click
// race lands exactly once, and the resulting store aggregates to the
// same numbers as an independent reimplementation of the score math.

import { ChildProcess, spawn, spawnSync } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, expect, test } from "vitest";

import { ApiError, createApi } from "../src/api";
import type { Assignment } from "../src/types";
import { mulberry32 } from "./rand";

const HERE = dirname(fileURLToPath(import.meta.url));
const PORT = 18100 + (process.pid % 500);
const BASE = `http://127.0.0.1:${PORT}`;

let workDir: string;
let server: ChildProcess | null = null;
let serverLog = "";

function py(args: string[]): string {
  const run = spawnSync("python3", args, { encoding: "utf-8" });
  if (run.status !== 0) {
    throw new Error(`python3 ${args.join(" ")} failed:\n${run.stdout}\n${run.stderr}`);
  }
  return run.stdout;
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

beforeAll(async () => {
  workDir = mkdtempSync(join(tmpdir(), "rating-ui-live-"));
  py([join(HERE, "make_fixture.py"), workDir]);
  server = spawn("python3", [
    "-m", "t2vqa.cli", "serve",
    "--manifest", join(workDir, "manifest.json"),
    "--store", join(workDir, "store.jsonl"),
    "--host", "127.0.0.1",
    "--port", String(PORT),
    "--out-dir", join(workDir, "serve-run"),
  ]);
  server.stdout?.on("data", (chunk) => (serverLog += chunk));
  server.stderr?.on("data", (chunk) => (serverLog += chunk));
  const deadline = Date.now() + 45_000;
  for (;;) {
    if (server.exitCode !== null) {
      throw new Error(`service exited early:\n${serverLog}`);
    }
    try {
      const res = await fetch(`${BASE}/api/progress`);
      if (res.ok) break;
    } catch {
      // not listening yet
    }
    if (Date.now() > deadline) {
      throw new Error(`service never came up:\n${serverLog}`);
    }
    await sleep(200);
  }
});

afterAll(async () => {
  if (server && server.exitCode === null) {
    const gone = new Promise((resolve) => server!.once("exit", resolve));
    server.kill("SIGTERM");
    await gone;
  }
});

/** Same normalization the service pipeline applies: z-score per annotator
 * over their own ratings (sample std), rescale to mean 50 / std 16.6,
 * then average per video. */
function mosOracle(given: Map<string, Map<string, number>>): Map<string, number> {
  const perVideo = new Map<string, number[]>();
  for (const ratings of given.values()) {
    const scores = [...ratings.values()];
    const m = scores.length;
    const mu = scores.reduce((acc, v) => acc + v, 0) / m;
    const sigma = Math.sqrt(
      scores.reduce((acc, v) => acc + (v - mu) ** 2, 0) / (m - 1),
    );
    for (const [video, raw] of ratings) {
      const scaled = 50 + 16.6 * ((raw - mu) / sigma);
      const list = perVideo.get(video) ?? [];
      list.push(scaled);
      perVideo.set(video, list);
    }
  }
  const out = new Map<string, number>();
  for (const [video, values] of perVideo) {
    out.set(video, values.reduce((acc, v) => acc + v, 0) / values.length);
  }
  return out;
}

test("two annotators rate the whole set through the client, store and MOS agree", async () => {
  const api = createApi(BASE);
  const rand = mulberry32(99);
  const given = new Map<string, Map<string, number>>();

  for (const annotator of ["ann-a", "ann-b"]) {
    const mine = new Map<string, number>();
    given.set(annotator, mine);
    let raced = false;
    for (;;) {
      let next: Assignment;
      try {
        next = await api.fetchAssignment(annotator);
      } catch (err) {
        if (err instanceof ApiError && err.status === 404) break;
        throw err;
      }
      expect(next.fps).toBeGreaterThan(0);
      expect(next.frame_urls.length).toBeGreaterThan(0);
      const score = Math.round(rand() * 100);
      const body = {
        annotator_id: annotator,
        video_id: next.video_id,
        raw_score: score,
      };
      if (!raced) {
        // double-click race: two posts in flight, exactly one may land
        raced = true;
        const results = await Promise.allSettled([
          api.submitRating(body),
          api.submitRating(body),
        ]);
        const accepted = results.filter((r) => r.status === "fulfilled");
        const duplicates = results.filter(
          (r) =>
            r.status === "rejected" &&
            r.reason instanceof ApiError &&
            r.reason.status === 409,
        );
        expect(accepted.length).toBe(1);
        expect(duplicates.length).toBe(1);
      } else {
        await api.submitRating(body);
      }
      expect(mine.has(next.video_id)).toBe(false);
      mine.set(next.video_id, score);
    }
    expect(mine.size).toBe(10);
  }

  const progress = await api.fetchProgress();
  expect(progress.per_annotator).toEqual({ "ann-a": 10, "ann-b": 10 });
  expect(progress.rated).toBe(10);

  // exactly 20 stored records, one per (annotator, video) pair
  const lines = readFileSync(join(workDir, "store.jsonl"), "utf-8")
    .split("\n")
    .filter((line) => line.trim().length > 0);
  expect(lines.length).toBe(20);
  const seen = new Set<string>();
  for (const line of lines) {
    const record = JSON.parse(line);
    expect(record.kind).toBe("rating");
    const key = `${record.annotator_id}:${record.video_id}`;
    expect(seen.has(key)).toBe(false);
    seen.add(key);
    expect(record.raw_score).toBe(
      given.get(record.annotator_id)!.get(record.video_id),
    );
  }

  // aggregate with the real pipeline and compare to the oracle
  const mosPath = join(workDir, "mos.jsonl");
  py([
    "-m", "t2vqa.cli", "compute-mos",
    "--manifest", join(workDir, "manifest.json"),
    "--ratings", join(workDir, "store.jsonl"),
    "--out", mosPath,
    "--out-dir", join(workDir, "mos-run"),
  ]);
  const want = mosOracle(given);
  const got = new Map<string, number>();
  for (const line of readFileSync(mosPath, "utf-8").split("\n")) {
    if (!line.trim()) continue;
    const record = JSON.parse(line);
    if (record.kind === "mos") got.set(record.video_id, record.mos_z);
  }
  expect(got.size).toBe(10);
  for (const [video, value] of want) {
    expect(Math.abs(got.get(video)! - value)).toBeLessThanOrEqual(1e-9);
  }
});

test("service edges the ui never produces: bad score rejected, frames are real png", async () => {
  // the input component clamps to [0, 100]; prove the server would
  // reject an out-of-range body anyway
  const res = await fetch(`${BASE}/api/rating`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({
      annotator_id: "probe",
      video_id: "v000",
      raw_score: 150,
    }),
  });
  expect(res.status).toBe(422);

  const frame = await fetch(`${BASE}/frames/v000/0`);
  expect(frame.status).toBe(200);
  const bytes = new Uint8Array(await frame.arrayBuffer());
  expect([...bytes.slice(0, 4)]).toEqual([0x89, 0x50, 0x4e, 0x47]);
});
