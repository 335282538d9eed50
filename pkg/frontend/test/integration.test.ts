// End-to-end against the real Python service: the console's live counters
// must converge to the manifest's record counts after a scripted session,
// and a tampered fixture must render the red verdict with the right index.
//
// Requires the fprig Python package to be installed (pip install -e ..).

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import WebSocket from "ws";

import { Api } from "../src/api.js";
import { LiveFeed } from "../src/live.js";
import { render, renderLive, renderVerify } from "../src/render.js";
import { ConsoleViewModel } from "../src/viewmodel.js";

const PYTHON = process.env.PYTHON ?? "python3";

let server: ChildProcess;
let baseUrl: string;
let dataDir: string;
let api: Api;

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const probe = createServer();
    probe.listen(0, "127.0.0.1", () => {
      const address = probe.address();
      if (address && typeof address === "object") {
        const port = address.port;
        probe.close(() => resolve(port));
      } else {
        reject(new Error("no port"));
      }
    });
  });
}

async function waitForHealthz(url: string, timeoutMs = 30_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(url + "/healthz");
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 200));
  }
  throw new Error("service did not become healthy");
}

function runDriver(sessionId: string, durationMs: number): Promise<void> {
  return new Promise((resolve, reject) => {
    const driver = spawn(PYTHON, [join(__dirname, "driver.py"), baseUrl, sessionId,
                                  String(durationMs)], { stdio: "inherit" });
    driver.on("exit", (code) =>
      code === 0 ? resolve() : reject(new Error(`driver exited ${code}`)));
  });
}

beforeAll(async () => {
  dataDir = mkdtempSync(join(tmpdir(), "fprig-console-"));
  const port = await freePort();
  baseUrl = `http://127.0.0.1:${port}`;
  server = spawn(PYTHON, ["-m", "fprig.cli", "serve", "--data-dir", dataDir,
                          "--port", String(port)], { stdio: "inherit" });
  await waitForHealthz(baseUrl);
  api = new Api(baseUrl);
});

afterAll(() => {
  server?.kill("SIGTERM");
});

describe("console against the real service", () => {
  it("live counters converge to the manifest record counts", async () => {
    const vm = new ConsoleViewModel();

    // configure_and_start from the console, then subscribe before data flows
    const manifest = await api.createSession({ session_id: "console-e2e", rng_seed: 21 });
    expect(manifest.status).toBe("recording");
    vm.startLive(manifest.session_id);

    const sealed = new Promise<void>((resolve) => {
      const feed = new LiveFeed(
        api.liveUrl("console-e2e"),
        (event) => {
          vm.applyFeedEvent(event);
          if (event.type === "session_sealed") resolve();
        },
        (url) => new WebSocket(url) as any,
      );
      feed.start();
    });

    // a scripted 30 s session streamed by the rig through the real service
    await runDriver("console-e2e", 30_000);
    await sealed;

    const finalManifest = await api.manifest("console-e2e");
    expect(finalManifest.status).toBe("sealed");
    expect(vm.sealed).toBe(true);
    expect(vm.countersMatch(finalManifest)).toBe(true);
    expect(vm.counters).toEqual(finalManifest.record_counts);

    // sanity on the expected default-rate volumes
    expect(vm.counters.eeg).toBe(3840);
    expect(vm.counters.gsr).toBe(30);
    expect(vm.counters.image).toBe(30);
    expect(vm.counters.des).toBe(1);
    expect(vm.thumbnailPath).toMatch(/^media\/img_/);
    expect(vm.sparkline.length).toBeGreaterThan(0);

    // thin-client check: the live view renders exactly the fetched numbers
    const html = renderLive(vm, (p) => api.mediaUrl("console-e2e", p));
    expect(html).toContain(`data-kind="eeg">${finalManifest.record_counts.eeg}<`);
    expect(html).toContain(`data-kind="gsr">${finalManifest.record_counts.gsr}<`);
  });

  it("renders the red verdict with the first bad index for a tampered fixture", async () => {
    await api.createSession({ session_id: "tamper-fix", segment_duration_ms: 2000, rng_seed: 5 });
    await runDriver("tamper-fix", 6_000);

    const segmentPath = join(dataDir, "tamper-fix", "segment_00001.json");
    const bytes = readFileSync(segmentPath);
    bytes[40] ^= 0x01;
    writeFileSync(segmentPath, bytes);

    const vm = new ConsoleViewModel();
    vm.activeSession = "tamper-fix";
    vm.setVerdict(await api.verify("tamper-fix"));

    expect(vm.verdict?.verdict).toBe("tampered");
    expect(vm.verdict?.first_bad_index).toBe(1);
    const html = renderVerify(vm);
    expect(html).toContain("badge-tampered");
    expect(html).toContain("first bad segment 1");
  });

  it("an intact fixture renders the green badge", async () => {
    await api.createSession({ session_id: "intact-fix", segment_duration_ms: 2000, rng_seed: 6 });
    await runDriver("intact-fix", 4_000);
    const vm = new ConsoleViewModel();
    vm.activeSession = "intact-fix";
    vm.setVerdict(await api.verify("intact-fix"));
    expect(vm.verdict?.verdict).toBe("intact");
    expect(renderVerify(vm)).toContain("badge-intact");
  });

  it("playback view renders fetched lanes for a sealed session", async () => {
    const vm = new ConsoleViewModel();
    vm.activeSession = "console-e2e";
    vm.mode = "playback";
    const manifest = await api.manifest("console-e2e");
    const endMs = manifest.segment_count * manifest.config.segment_duration_ms;
    const records = await api.records("console-e2e", 0, 10_000, ["image", "transcript", "des"]);
    const arousal = await api.arousalSeries("console-e2e", 0, 10_000);
    vm.setPlaybackData(0, endMs, records, arousal);

    const html = render(vm, (p) => api.mediaUrl("console-e2e", p));
    expect(html).toContain("image-strip");
    expect(html).toContain("console check"); // transcript text round-trips
    expect(html).toContain("des-marker");
    expect(vm.clampCursor(10 * endMs)).toBe(endMs - 10_000);
  });
});
