// MQTT-over-WebSocket session for the dashboard: connect, subscribe at QoS 0,
// publish, auto-reconnect with "reconnecting" notifications.

import {
  CONNACK,
  PINGRESP,
  PUBLISH,
  SUBACK,
  decodePacket,
  encodeConnect,
  encodeDisconnect,
  encodePingreq,
  encodePublish,
  encodeSubscribe,
} from "./mqttPackets.js";

export interface MqttWsOptions {
  url: string;
  clientId: string;
  keepaliveSeconds?: number;
  subscriptions: string[];
  onConnected: () => void;
  onReconnecting: () => void;
  onMessage: (topic: string, payload: Uint8Array) => void;
}

const RECONNECT_DELAY_MS = 1500;

export class MqttWsClient {
  private ws: WebSocket | null = null;
  private buffer = new Uint8Array(0);
  private pingTimer: ReturnType<typeof setInterval> | null = null;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;
  private nextPacketId = 1;
  private closed = false;
  connected = false;

  constructor(private options: MqttWsOptions) {}

  start(): void {
    this.closed = false;
    this.open();
  }

  stop(): void {
    this.closed = true;
    this.teardown();
    if (this.ws && this.ws.readyState === WebSocket.OPEN) {
      this.ws.send(encodeDisconnect());
      this.ws.close();
    }
    this.ws = null;
  }

  publish(topic: string, payload: string): boolean {
    if (!this.connected || !this.ws || this.ws.readyState !== WebSocket.OPEN) {
      return false;
    }
    this.ws.send(encodePublish(topic, new TextEncoder().encode(payload)));
    return true;
  }

  private open(): void {
    const ws = new WebSocket(this.options.url, "mqtt");
    ws.binaryType = "arraybuffer";
    this.ws = ws;
    ws.onopen = () => {
      ws.send(encodeConnect(this.options.clientId, this.options.keepaliveSeconds ?? 60));
    };
    ws.onmessage = (event: MessageEvent) => {
      this.feed(new Uint8Array(event.data as ArrayBuffer));
    };
    ws.onclose = () => this.onClosed();
    ws.onerror = () => {
      // onclose always follows; reconnect handled there
    };
  }

  private onClosed(): void {
    this.teardown();
    if (this.closed) return;
    this.options.onReconnecting();
    this.reconnectTimer = setTimeout(() => this.open(), RECONNECT_DELAY_MS);
  }

  private teardown(): void {
    this.connected = false;
    if (this.pingTimer !== null) {
      clearInterval(this.pingTimer);
      this.pingTimer = null;
    }
    if (this.reconnectTimer !== null) {
      clearTimeout(this.reconnectTimer);
      this.reconnectTimer = null;
    }
  }

  private feed(chunk: Uint8Array): void {
    const merged = new Uint8Array(this.buffer.length + chunk.length);
    merged.set(this.buffer);
    merged.set(chunk, this.buffer.length);
    this.buffer = merged;
    for (;;) {
      let decoded;
      try {
        decoded = decodePacket(this.buffer);
      } catch {
        this.ws?.close();
        return;
      }
      if (decoded === null) return;
      this.buffer = this.buffer.subarray(decoded.consumed);
      this.handle(decoded);
    }
  }

  private handle(packet: ReturnType<typeof decodePacket>): void {
    if (!packet || !this.ws) return;
    if (packet.type === CONNACK) {
      if (packet.returnCode !== 0) {
        this.ws.close();
        return;
      }
      this.connected = true;
      const pid = this.nextPacketId;
      this.nextPacketId = (this.nextPacketId % 0xffff) + 1;
      this.ws.send(encodeSubscribe(pid, this.options.subscriptions));
      const keepalive = this.options.keepaliveSeconds ?? 60;
      if (keepalive > 0) {
        this.pingTimer = setInterval(() => {
          if (this.ws && this.ws.readyState === WebSocket.OPEN) {
            this.ws.send(encodePingreq());
          }
        }, (keepalive / 2) * 1000);
      }
      this.options.onConnected();
    } else if (packet.type === PUBLISH && packet.topic !== undefined) {
      this.options.onMessage(packet.topic, packet.payload ?? new Uint8Array(0));
    } else if (packet.type === SUBACK || packet.type === PINGRESP) {
      // nothing to track at QoS 0
    }
  }
}
