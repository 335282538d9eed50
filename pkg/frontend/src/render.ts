// Pure HTML renderers; the browser layer only mounts the returned strings.

import type { ConsoleViewModel } from "./viewmodel.js";
import { DEFAULT_FORM, PLAYBACK_WINDOW_MS } from "./viewmodel.js";
import type { ArousalPoint, TimelineRecord } from "./types.js";

export function escapeHtml(text: unknown): string {
  return String(text)
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

function field(name: keyof typeof DEFAULT_FORM, label: string, vm: ConsoleViewModel,
               type = "number"): string {
  const value = vm.form[name];
  const error = vm.fieldErrors[name as string];
  return `
  <label class="field${error ? " field-error" : ""}">
    <span>${label}</span>
    <input name="${name}" type="${type}" value="${escapeHtml(value)}"
           ${type === "checkbox" && value ? "checked" : ""}>
    ${error ? `<em class="error">${escapeHtml(error)}</em>` : ""}
  </label>`;
}

export function renderSetup(vm: ConsoleViewModel): string {
  const sessions = vm.sessions.map((s) => `
    <tr>
      <td>${escapeHtml(s.session_id)}</td>
      <td>${s.status}</td>
      <td>${s.segment_count}</td>
      <td>
        ${s.status === "recording"
          ? `<button data-action="monitor" data-session="${escapeHtml(s.session_id)}">monitor</button>`
          : `<button data-action="playback" data-session="${escapeHtml(s.session_id)}">playback</button>
             <button data-action="verify" data-session="${escapeHtml(s.session_id)}">verify</button>`}
      </td>
    </tr>`).join("");
  return `
  ${vm.banner ? `<div class="banner">${escapeHtml(vm.banner)}</div>` : ""}
  <section class="setup">
    <h2>New recording session</h2>
    <form data-action="start-form">
      ${field("session_id", "Session id", vm, "text")}
      ${field("image_period_ms", "Image period (ms)", vm)}
      ${field("gsr_period_ms", "GSR period (ms)", vm)}
      ${field("eeg_rate_hz", "EEG rate (Hz)", vm)}
      ${field("segment_duration_ms", "Segment duration (ms)", vm)}
      ${field("des_interval_min_s", "DES min interval (s)", vm)}
      ${field("des_interval_max_s", "DES max interval (s)", vm)}
      ${field("rng_seed", "Seed", vm)}
      ${field("blur_enabled", "Blur faces", vm, "checkbox")}
      <button type="submit">configure &amp; start</button>
    </form>
  </section>
  <section>
    <h2>Sessions</h2>
    <table><thead><tr><th>id</th><th>status</th><th>segments</th><th></th></tr></thead>
    <tbody>${sessions || '<tr><td colspan="4">none yet</td></tr>'}</tbody></table>
  </section>`;
}

export function sparklineSvg(points: ArousalPoint[], width = 360, height = 60): string {
  if (points.length < 2) return `<svg class="sparkline" width="${width}" height="${height}"></svg>`;
  const t0 = points[0].t_ms;
  const t1 = points[points.length - 1].t_ms || t0 + 1;
  const x = (t: number) => ((t - t0) / Math.max(t1 - t0, 1)) * (width - 4) + 2;
  const y = (a: number) => height - ((a + 2.5) / 5.0) * (height - 4) - 2;
  const path = points.map((p) => `${x(p.t_ms).toFixed(1)},${y(p.arousal).toFixed(1)}`).join(" ");
  return `<svg class="sparkline" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">
    <line x1="0" y1="${height / 2}" x2="${width}" y2="${height / 2}" class="axis"/>
    <polyline points="${path}" fill="none"/>
  </svg>`;
}

export function renderLive(vm: ConsoleViewModel, mediaUrl: (path: string) => string): string {
  const counters = Object.keys(vm.counters).sort().map((kind) =>
    `<tr><td>${escapeHtml(kind)}</td><td class="count" data-kind="${escapeHtml(kind)}">${vm.counters[kind]}</td></tr>`,
  ).join("");
  return `
  <section class="live">
    <h2>Live: ${escapeHtml(vm.activeSession)}</h2>
    <p class="feed-status">
      ${vm.feedConnected ? "feed connected" : "feed disconnected"}
      ${vm.gapWarning ? '<span class="warn">events missed during a feed drop</span>' : ""}
      ${vm.sealed ? "<strong>sealed</strong>" : ""}
    </p>
    <div class="live-grid">
      <table class="counters"><thead><tr><th>stream</th><th>records</th></tr></thead>
        <tbody>${counters || '<tr><td colspan="2">waiting for data</td></tr>'}</tbody></table>
      <div>
        <h3>Arousal</h3>
        ${sparklineSvg(vm.sparkline)}
        <h3>Latest frame</h3>
        ${vm.thumbnailPath
          ? `<img class="thumb" alt="latest (blurred) frame" src="${escapeHtml(mediaUrl(vm.thumbnailPath))}">`
          : "<p>no image yet</p>"}
        <p>DES tones so far: ${vm.tones.length}</p>
      </div>
    </div>
    <button data-action="stop-session">stop session</button>
    <button data-action="back">back</button>
  </section>`;
}

function playbackLanes(vm: ConsoleViewModel, mediaUrl: (path: string) => string): string {
  const { cursorMs, records } = vm.playback;
  const t1 = cursorMs + PLAYBACK_WINDOW_MS;
  const images = records.filter((r) => r.kind === "image");
  const transcripts = records.filter((r) => r.kind === "transcript");
  const reports = records.filter((r) => r.kind === "des");
  const pct = (t: number) => (((t - cursorMs) / PLAYBACK_WINDOW_MS) * 100).toFixed(2);

  const strip = images.map((r: TimelineRecord) =>
    `<img src="${escapeHtml(mediaUrl(r.path))}" title="t=${r.t_ms}" alt="frame at ${r.t_ms} ms">`).join("");
  const lane = transcripts.map((r) =>
    `<div class="lane-item" style="left:${pct(r.t_start_ms)}%">
       <span class="speaker">${escapeHtml(r.speaker)}</span> ${escapeHtml(r.text)}</div>`).join("");
  const markers = reports.map((r) =>
    `<div class="des-marker" style="left:${pct(r.t_start_ms)}%"
          title="${escapeHtml(r.text)}">&#9650;</div>`).join("");
  return `
    <div class="image-strip">${strip || "<p>no frames in window</p>"}</div>
    <div class="transcript-lane">${lane || "<p>no speech in window</p>"}</div>
    <div class="des-lane">${markers}</div>
    <p class="window-label">window [${cursorMs}, ${t1}) ms of ${vm.playback.endMs} ms</p>`;
}

export function renderPlayback(vm: ConsoleViewModel, mediaUrl: (path: string) => string): string {
  return `
  <section class="playback">
    <h2>Playback: ${escapeHtml(vm.activeSession)}</h2>
    <input type="range" data-action="scrub" min="0"
           max="${Math.max(0, vm.playback.endMs - PLAYBACK_WINDOW_MS)}"
           step="1000" value="${vm.playback.cursorMs}">
    ${playbackLanes(vm, mediaUrl)}
    <h3>Arousal</h3>
    ${sparklineSvg(vm.playback.arousal)}
    <button data-action="verify" data-session="${escapeHtml(vm.activeSession)}">verify chain</button>
    <button data-action="back">back</button>
  </section>`;
}

export function renderVerify(vm: ConsoleViewModel): string {
  const report = vm.verdict;
  if (!report) return "<section><p>no verification result</p></section>";
  const rows = report.details.map((d) => `
    <tr class="status-${escapeHtml(d.status)}">
      <td>${d.segment_index}</td><td>${escapeHtml(d.status)}</td>
      <td>${escapeHtml(d.message)}</td>
    </tr>`).join("");
  const badgeText = report.verdict === "tampered"
    ? `tampered (first bad segment ${report.first_bad_index})`
    : report.verdict;
  return `
  <section class="verify">
    <h2>Chain verification: ${escapeHtml(vm.activeSession)}</h2>
    <div class="badge badge-${escapeHtml(report.verdict)}">${escapeHtml(badgeText)}</div>
    <table><thead><tr><th>segment</th><th>status</th><th>detail</th></tr></thead>
      <tbody>${rows}</tbody></table>
    <button data-action="back">back</button>
  </section>`;
}

export function render(vm: ConsoleViewModel, mediaUrl: (path: string) => string): string {
  switch (vm.mode) {
    case "live":
      return renderLive(vm, mediaUrl);
    case "playback":
      return renderPlayback(vm, mediaUrl);
    case "verify":
      return renderVerify(vm);
    default:
      return renderSetup(vm);
  }
}
