import { describe, expect, it } from "vitest";

import { render, renderVerify, sparklineSvg } from "../src/render.js";
import { ConsoleViewModel, DEFAULT_FORM } from "../src/viewmodel.js";
import type { ChainReport } from "../src/types.js";

const media = (path: string) => `/sessions/s/${path}`;

describe("setup view", () => {
  it("shows inline field errors without losing input", () => {
    const vm = new ConsoleViewModel();
    vm.form = { ...DEFAULT_FORM, session_id: "x", des_interval_min_s: 100, des_interval_max_s: 10 };
    vm.fieldErrors = { des_interval_min_s: "min interval exceeds max" };
    const html = render(vm, media);
    expect(html).toContain("field-error");
    expect(html).toContain("min interval exceeds max");
    expect(html).toContain('value="100"');
  });

  it("shows a connection banner", () => {
    const vm = new ConsoleViewModel();
    vm.banner = "service unreachable";
    expect(render(vm, media)).toContain("service unreachable");
  });

  it("escapes session ids", () => {
    const vm = new ConsoleViewModel();
    vm.sessions = [{ session_id: "a<b", status: "sealed", segment_count: 1 }];
    const html = render(vm, media);
    expect(html).toContain("a&lt;b");
    expect(html).not.toContain("a<b");
  });
});

describe("live view", () => {
  it("renders counters and the blurred thumbnail", () => {
    const vm = new ConsoleViewModel();
    vm.startLive("s");
    vm.counters = { gsr: 3, eeg: 128 };
    vm.thumbnailPath = "media/img_1000.ppm";
    const html = render(vm, media);
    expect(html).toContain('data-kind="gsr">3<');
    expect(html).toContain('data-kind="eeg">128<');
    expect(html).toContain('src="/sessions/s/media/img_1000.ppm"');
  });

  it("marks a feed gap", () => {
    const vm = new ConsoleViewModel();
    vm.startLive("s");
    vm.gapWarning = true;
    expect(render(vm, media)).toContain("events missed");
  });
});

describe("verify view", () => {
  const reportOf = (verdict: ChainReport["verdict"], firstBad: number | null): ChainReport => ({
    verdict,
    first_bad_index: firstBad,
    details: [{ segment_index: 0, status: "ok", message: "" }],
  });

  it("renders a green badge for intact", () => {
    const vm = new ConsoleViewModel();
    vm.setVerdict(reportOf("intact", null));
    expect(renderVerify(vm)).toContain("badge-intact");
  });

  it("renders a red badge with the first bad index for tampered", () => {
    const vm = new ConsoleViewModel();
    vm.setVerdict(reportOf("tampered", 2));
    const html = renderVerify(vm);
    expect(html).toContain("badge-tampered");
    expect(html).toContain("first bad segment 2");
  });

  it("renders an amber badge for gapped", () => {
    const vm = new ConsoleViewModel();
    vm.setVerdict(reportOf("gapped", null));
    expect(renderVerify(vm)).toContain("badge-gapped");
  });
});

describe("sparkline", () => {
  it("maps the arousal range onto the svg", () => {
    const svg = sparklineSvg([
      { t_ms: 0, arousal: -2.5 },
      { t_ms: 1000, arousal: 2.5 },
    ], 100, 50);
    expect(svg).toContain("polyline");
    expect(svg).toContain("2.0,48.0"); // -2.5 at the bottom
    expect(svg).toContain("98.0,2.0"); // +2.5 at the top
  });

  it("is empty with fewer than two points", () => {
    expect(sparklineSvg([{ t_ms: 0, arousal: 0 }])).not.toContain("polyline");
  });
});

describe("playback view", () => {
  it("renders lanes and markers from fetched records", () => {
    const vm = new ConsoleViewModel();
    vm.activeSession = "s";
    vm.mode = "playback";
    vm.setPlaybackData(0, 60000, [
      { kind: "image", t_ms: 1000, path: "media/img_1000.ppm", digest: "x" },
      { kind: "transcript", t_start_ms: 2000, t_end_ms: 3000, speaker: "wearer", text: "hello" },
      { kind: "des", t_start_ms: 4000, t_end_ms: 5000, text: "a report", terminated: true },
    ], [{ t_ms: 0, arousal: 0 }, { t_ms: 1000, arousal: 1 }]);
    const html = render(vm, media);
    expect(html).toContain("img_1000.ppm");
    expect(html).toContain("hello");
    expect(html).toContain("des-marker");
    expect(html).toContain('value="0"');
  });
});
