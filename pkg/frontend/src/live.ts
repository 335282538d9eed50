// Live-feed subscription: at-least-once delivery deduplicated by feed_seq,
// with automatic resubscribe (and a gap warning) when the socket drops.

import type { FeedEvent } from "./types.js";

export interface WebSocketLike {
  onopen: ((ev?: any) => void) | null;
  onmessage: ((ev: { data: any }) => void) | null;
  onclose: ((ev?: any) => void) | null;
  onerror: ((ev?: any) => void) | null;
  close(): void;
}

export type WsFactory = (url: string) => WebSocketLike;

export interface LiveFeedStatus {
  connected: boolean;
  reconnects: number;
  gapWarning: boolean;
  terminal: boolean;
}

export class LiveFeed {
  private ws: WebSocketLike | null = null;
  private lastSeq = 0;
  private stopped = false;
  private reconnectDelayMs: number;
  readonly status: LiveFeedStatus = {
    connected: false,
    reconnects: 0,
    gapWarning: false,
    terminal: false,
  };

  constructor(
    private url: string,
    private onEvent: (event: FeedEvent) => void,
    private wsFactory: WsFactory,
    private onStatus: (status: LiveFeedStatus) => void = () => {},
    reconnectDelayMs = 500,
  ) {
    this.reconnectDelayMs = reconnectDelayMs;
  }

  start(): void {
    this.connect(false);
  }

  private connect(isReconnect: boolean): void {
    if (this.stopped || this.status.terminal) return;
    const ws = this.wsFactory(this.url);
    this.ws = ws;
    ws.onopen = () => {
      this.status.connected = true;
      if (isReconnect) this.status.reconnects += 1;
      this.onStatus(this.status);
    };
    ws.onmessage = (message) => {
      let event: FeedEvent;
      try {
        event = JSON.parse(String(message.data));
      } catch {
        return;
      }
      if (event.feed_seq <= this.lastSeq) return; // duplicate delivery
      if (isReconnect && this.lastSeq > 0 && event.feed_seq > this.lastSeq + 1) {
        // events were published while we were away and are gone
        this.status.gapWarning = true;
        this.onStatus(this.status);
      }
      this.lastSeq = event.feed_seq;
      if (event.type === "session_sealed") {
        this.status.terminal = true;
        this.onStatus(this.status);
      }
      this.onEvent(event);
    };
    ws.onerror = () => {};
    ws.onclose = () => {
      this.status.connected = false;
      this.onStatus(this.status);
      if (!this.stopped && !this.status.terminal) {
        setTimeout(() => this.connect(true), this.reconnectDelayMs);
      }
    };
  }

  stop(): void {
    this.stopped = true;
    this.ws?.close();
  }
}
