// Device-card state machine: per-kind controls, "soft power" activation, and
// optimistic updates that revert unless the home confirms them.
//
// Kept DOM-free so the behavior is unit-testable; app.ts renders it.

import { encodePayload } from "./payload.js";
import type { AcParams, DeviceKind, DeviceParams } from "./types.js";
import { TEMP_MAX, TEMP_MIN, defaultParams } from "./types.js";

export interface CardEvent {
  kind: "publish" | "suppressed" | "confirmed" | "reverted";
  payload?: string;
  note?: string;
}

export type SendFn = (device: string, payload: string) => boolean;

export const CONFIRM_TIMEOUT_MS = 5000;

export class DeviceCard {
  active = true; // "soft power": when off, every control is disabled
  confirmed: DeviceParams;
  pending: DeviceParams | null = null;
  private pendingTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    readonly id: string,
    readonly kind: DeviceKind,
    readonly room: string,
    initial?: DeviceParams,
    private confirmTimeoutMs = CONFIRM_TIMEOUT_MS,
  ) {
    this.confirmed = initial ?? defaultParams(kind);
  }

  /** Params the UI should render right now (optimistic while pending). */
  get displayed(): DeviceParams {
    return this.pending ?? this.confirmed;
  }

  get controlsEnabled(): boolean {
    return this.active;
  }

  setActive(active: boolean): CardEvent {
    this.active = active;
    return {
      kind: "suppressed",
      note: active
        ? `${this.id} is active (now soft power on, all functions available)`
        : `${this.id} is inactive (soft power off, all functions disabled)`,
    };
  }

  /** User interaction: desired full param set. Publishes unless inactive. */
  request(params: DeviceParams, send: SendFn, onTimeout?: () => void): CardEvent {
    if (!this.active) {
      return {
        kind: "suppressed",
        note: `${this.id} is inactive (soft power off); nothing sent`,
      };
    }
    const clamped = this.clampParams(params);
    const payload = encodePayload(this.id, clamped);
    if (!send(this.id, payload)) {
      return { kind: "suppressed", note: "not connected; nothing sent" };
    }
    this.pending = clamped;
    if (this.pendingTimer !== null) clearTimeout(this.pendingTimer);
    this.pendingTimer = setTimeout(() => {
      if (this.pending !== null) {
        this.revert();
        onTimeout?.();
      }
    }, this.confirmTimeoutMs);
    return { kind: "publish", payload };
  }

  /** Confirmation from the home (response line or state echo). */
  confirm(): CardEvent {
    if (this.pendingTimer !== null) {
      clearTimeout(this.pendingTimer);
      this.pendingTimer = null;
    }
    if (this.pending !== null) {
      this.confirmed = this.pending;
      this.pending = null;
    }
    return { kind: "confirmed" };
  }

  /** Authoritative state observed from the home (floorplan stream). */
  absorb(params: DeviceParams): void {
    this.confirmed = params;
    if (this.pending !== null && encodePayload(this.id, this.pending) === encodePayload(this.id, params)) {
      this.pending = null;
      if (this.pendingTimer !== null) {
        clearTimeout(this.pendingTimer);
        this.pendingTimer = null;
      }
    }
  }

  revert(): CardEvent {
    if (this.pendingTimer !== null) {
      clearTimeout(this.pendingTimer);
      this.pendingTimer = null;
    }
    this.pending = null;
    return { kind: "reverted", note: `${this.id} reverted to last confirmed state` };
  }

  /** The AC temperature stepper cannot leave 18..26. */
  private clampParams(params: DeviceParams): DeviceParams {
    if (this.kind === "ac" && "temperature" in params) {
      const ac = params as AcParams;
      const temperature = Math.min(TEMP_MAX, Math.max(TEMP_MIN, ac.temperature));
      return { ...ac, temperature };
    }
    return params;
  }
}
