// Console state. Every number shown in a view comes from the service
// (counters count feed events; arousal values arrive precomputed); this
// module never derives record content itself.

import type {
  ArousalPoint,
  ChainReport,
  FeedEvent,
  ManifestView,
  SessionConfigForm,
  SessionSummary,
  TimelineRecord,
} from "./types.js";

export type ViewMode = "setup" | "live" | "playback" | "verify";

export const DEFAULT_FORM: SessionConfigForm = {
  session_id: "",
  image_period_ms: 1000,
  gsr_period_ms: 1000,
  eeg_rate_hz: 128,
  segment_duration_ms: 60000,
  des_interval_min_s: 900,
  des_interval_max_s: 3600,
  blur_enabled: true,
  rng_seed: 0,
};

const SPARKLINE_CAP = 400;
export const PLAYBACK_WINDOW_MS = 10000;

export function validateForm(form: SessionConfigForm): Record<string, string> {
  const errors: Record<string, string> = {};
  if (!/^[A-Za-z0-9][A-Za-z0-9._-]{0,63}$/.test(form.session_id)) {
    errors.session_id = "letters, digits, . _ - (max 64)";
  }
  if (!(form.image_period_ms >= 100)) errors.image_period_ms = "must be >= 100 ms";
  if (!(form.gsr_period_ms >= 1)) errors.gsr_period_ms = "must be positive";
  if (!(form.eeg_rate_hz >= 1)) errors.eeg_rate_hz = "must be positive";
  if (!(form.segment_duration_ms >= 1000)) errors.segment_duration_ms = "must be >= 1000 ms";
  if (!(form.des_interval_min_s >= 1)) errors.des_interval_min_s = "must be positive";
  if (form.des_interval_min_s > form.des_interval_max_s) {
    errors.des_interval_min_s = "min interval exceeds max";
  }
  return errors;
}

/** Map server-side violation strings ("field: rule") onto form fields. */
export function violationsToFieldErrors(violations: string[]): Record<string, string> {
  const errors: Record<string, string> = {};
  for (const violation of violations) {
    const sep = violation.indexOf(":");
    if (sep > 0) {
      errors[violation.slice(0, sep).trim()] = violation.slice(sep + 1).trim();
    }
  }
  return errors;
}

export interface PlaybackState {
  cursorMs: number;
  endMs: number;
  records: TimelineRecord[];
  arousal: ArousalPoint[];
}

export class ConsoleViewModel {
  mode: ViewMode = "setup";
  sessions: SessionSummary[] = [];
  form: SessionConfigForm = { ...DEFAULT_FORM };
  fieldErrors: Record<string, string> = {};
  banner: string | null = null;

  activeSession: string | null = null;
  counters: Record<string, number> = {};
  sparkline: ArousalPoint[] = [];
  thumbnailPath: string | null = null;
  tones: number[] = [];
  sealed = false;
  feedConnected = false;
  gapWarning = false;

  playback: PlaybackState = { cursorMs: 0, endMs: 0, records: [], arousal: [] };
  verdict: ChainReport | null = null;

  startLive(sessionId: string): void {
    this.mode = "live";
    this.activeSession = sessionId;
    this.counters = {};
    this.sparkline = [];
    this.thumbnailPath = null;
    this.tones = [];
    this.sealed = false;
    this.gapWarning = false;
    this.banner = null;
  }

  /** Fold one live-feed event into the counters and lanes. */
  applyFeedEvent(event: FeedEvent): void {
    if (event.type === "session_sealed") {
      this.sealed = true;
      this.mode = "playback";
      return;
    }
    if (event.type === "des_tone") {
      this.tones.push(event.t_ms ?? 0);
      return;
    }
    const kind = event.kind ?? "unknown";
    this.counters[kind] = (this.counters[kind] ?? 0) + 1;
    if (kind === "cognition" && typeof event.arousal === "number") {
      this.sparkline.push({ t_ms: event.record?.t_ms ?? 0, arousal: event.arousal });
      if (this.sparkline.length > SPARKLINE_CAP) this.sparkline.shift();
    } else if (kind === "image") {
      this.thumbnailPath = event.record?.path ?? null;
    }
  }

  /** True when every kind the manifest reports matches our live counters. */
  countersMatch(manifest: ManifestView): boolean {
    const kinds = new Set([
      ...Object.keys(manifest.record_counts),
      ...Object.keys(this.counters),
    ]);
    for (const kind of kinds) {
      if ((manifest.record_counts[kind] ?? 0) !== (this.counters[kind] ?? 0)) return false;
    }
    return true;
  }

  clampCursor(cursorMs: number): number {
    const max = Math.max(0, this.playback.endMs - PLAYBACK_WINDOW_MS);
    return Math.min(Math.max(0, cursorMs), max);
  }

  setPlaybackData(cursorMs: number, endMs: number,
                  records: TimelineRecord[], arousal: ArousalPoint[]): void {
    this.playback = { cursorMs, endMs, records, arousal };
  }

  setVerdict(report: ChainReport): void {
    this.verdict = report;
    this.mode = "verify";
  }
}
