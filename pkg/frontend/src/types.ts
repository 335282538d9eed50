// Wire types of the recording service (see the service README for endpoints).

export interface SessionConfigForm {
  session_id: string;
  image_period_ms: number;
  gsr_period_ms: number;
  eeg_rate_hz: number;
  segment_duration_ms: number;
  des_interval_min_s: number;
  des_interval_max_s: number;
  blur_enabled: boolean;
  rng_seed: number;
}

export interface SessionSummary {
  session_id: string;
  status: "recording" | "sealed";
  segment_count: number;
}

export interface ManifestView {
  session_id: string;
  status: "recording" | "sealed";
  segment_count: number;
  config: SessionConfigForm & { providers?: Record<string, unknown> };
  record_counts: Record<string, number>;
  des_tones: number[];
  attestation_gaps: number[];
  last_attestation: string | null;
}

export interface FeedEvent {
  type: "record" | "des_tone" | "session_sealed";
  feed_seq: number;
  session_id: string;
  kind?: string;
  record?: Record<string, any>;
  arousal?: number; // present on cognition record events, computed server-side
  t_ms?: number; // des_tone
}

export interface SegmentCheck {
  segment_index: number;
  status: string;
  message: string;
}

export interface ChainReport {
  verdict: "intact" | "tampered" | "gapped";
  first_bad_index: number | null;
  details: SegmentCheck[];
}

export interface ArousalPoint {
  t_ms: number;
  arousal: number;
}

export type TimelineRecord = Record<string, any> & { kind: string };
