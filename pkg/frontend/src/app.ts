// Browser bootstrap: the only module that touches the DOM and window.

import { Api, ApiError } from "./api.js";
import { LiveFeed } from "./live.js";
import { render } from "./render.js";
import {
  ConsoleViewModel,
  DEFAULT_FORM,
  PLAYBACK_WINDOW_MS,
  validateForm,
  violationsToFieldErrors,
} from "./viewmodel.js";
import type { SessionConfigForm } from "./types.js";

const api = new Api(window.location.origin);
const vm = new ConsoleViewModel();
let feed: LiveFeed | null = null;

const root = document.getElementById("app")!;

function mount(): void {
  root.innerHTML = render(vm, (path) => api.mediaUrl(vm.activeSession ?? "", path));
}

async function refreshSessions(): Promise<void> {
  try {
    vm.sessions = await api.listSessions();
    vm.banner = null;
  } catch {
    vm.banner = "service unreachable";
  }
  mount();
}

function readForm(formEl: HTMLFormElement): SessionConfigForm {
  const data = new FormData(formEl);
  const num = (name: string) => Number(data.get(name) ?? 0);
  return {
    session_id: String(data.get("session_id") ?? ""),
    image_period_ms: num("image_period_ms"),
    gsr_period_ms: num("gsr_period_ms"),
    eeg_rate_hz: num("eeg_rate_hz"),
    segment_duration_ms: num("segment_duration_ms"),
    des_interval_min_s: num("des_interval_min_s"),
    des_interval_max_s: num("des_interval_max_s"),
    blur_enabled: data.get("blur_enabled") !== null,
    rng_seed: num("rng_seed"),
  };
}

function subscribe(sessionId: string): void {
  feed?.stop();
  feed = new LiveFeed(
    api.liveUrl(sessionId),
    (event) => {
      vm.applyFeedEvent(event);
      if (vm.mode === "playback" && event.type === "session_sealed") {
        void openPlayback(sessionId);
        return;
      }
      mount();
    },
    (url) => new WebSocket(url) as any,
    (status) => {
      vm.feedConnected = status.connected;
      vm.gapWarning = status.gapWarning;
      mount();
    },
  );
  feed.start();
}

async function configureAndStart(form: SessionConfigForm): Promise<void> {
  vm.form = form;
  vm.fieldErrors = validateForm(form);
  if (Object.keys(vm.fieldErrors).length > 0) {
    mount();
    return; // invalid: no request
  }
  try {
    const manifest = await api.createSession(form);
    vm.startLive(manifest.session_id);
    subscribe(manifest.session_id);
  } catch (error) {
    if (error instanceof ApiError && error.violations.length > 0) {
      vm.fieldErrors = violationsToFieldErrors(error.violations);
    } else if (error instanceof ApiError) {
      vm.banner = error.message;
    } else {
      vm.banner = "service unreachable";
    }
  }
  mount();
}

async function openPlayback(sessionId: string, cursorMs = 0): Promise<void> {
  const manifest = await api.manifest(sessionId);
  const endMs = manifest.segment_count * manifest.config.segment_duration_ms;
  vm.activeSession = sessionId;
  vm.mode = "playback";
  vm.playback.endMs = endMs;
  const cursor = vm.clampCursor(cursorMs);
  const [records, arousal] = await Promise.all([
    api.records(sessionId, cursor, cursor + PLAYBACK_WINDOW_MS,
                ["image", "transcript", "des"]),
    api.arousalSeries(sessionId, cursor, cursor + PLAYBACK_WINDOW_MS),
  ]);
  vm.setPlaybackData(cursor, endMs, records, arousal);
  mount();
}

async function openVerify(sessionId: string): Promise<void> {
  vm.activeSession = sessionId;
  try {
    vm.setVerdict(await api.verify(sessionId));
  } catch {
    vm.banner = "verification service error; try again";
    vm.mode = "setup";
  }
  mount();
}

document.addEventListener("submit", (event) => {
  const target = event.target as HTMLFormElement;
  if (target.dataset.action === "start-form") {
    event.preventDefault();
    void configureAndStart(readForm(target));
  }
});

document.addEventListener("click", (event) => {
  const button = (event.target as HTMLElement).closest<HTMLElement>("[data-action]");
  if (!button) return;
  const session = button.dataset.session ?? vm.activeSession ?? "";
  switch (button.dataset.action) {
    case "monitor":
      vm.startLive(session);
      subscribe(session);
      mount();
      break;
    case "playback":
      void openPlayback(session);
      break;
    case "verify":
      void openVerify(session);
      break;
    case "stop-session":
      void api.stopSession(session).then(() => openPlayback(session));
      break;
    case "back":
      feed?.stop();
      vm.mode = "setup";
      vm.form = { ...DEFAULT_FORM };
      vm.fieldErrors = {};
      void refreshSessions();
      break;
  }
});

document.addEventListener("input", (event) => {
  const el = event.target as HTMLInputElement;
  if (el.dataset.action === "scrub" && vm.activeSession) {
    void openPlayback(vm.activeSession, Number(el.value));
  }
});

void refreshSessions();
