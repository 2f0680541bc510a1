// Device command payload encoding, byte-identical to the control plane's own
// encoder: compact JSON, `device` before `params`, params keys in the fixed
// per-kind order.

import type { DeviceKind, DeviceParams } from "./types.js";

const PARAM_KEY_ORDER: Record<DeviceKind, string[]> = {
  bulb: ["power", "color"],
  fan: ["power"],
  ac: ["power", "h_direction", "temperature"],
  lock: ["door_status"],
};

export function kindOfParams(params: DeviceParams): DeviceKind {
  if ("color" in params) return "bulb";
  if ("h_direction" in params) return "ac";
  if ("door_status" in params) return "lock";
  return "fan";
}

function jsonScalar(value: unknown): string {
  if (typeof value === "string") return JSON.stringify(value);
  if (typeof value === "boolean") return value ? "true" : "false";
  if (typeof value === "number" && Number.isInteger(value)) return String(value);
  throw new Error(`unsupported payload value: ${String(value)}`);
}

export function encodePayload(device: string, params: DeviceParams): string {
  const kind = kindOfParams(params);
  const record = params as unknown as Record<string, unknown>;
  const inner = PARAM_KEY_ORDER[kind]
    .map((key) => `${JSON.stringify(key)}:${jsonScalar(record[key])}`)
    .join(",");
  return `{"device":${JSON.stringify(device)},"params":{${inner}}}`;
}

export function parseResponse(payload: string): string | null {
  try {
    const obj = JSON.parse(payload);
    if (obj && typeof obj === "object" && typeof obj.response === "string") {
      return obj.response;
    }
  } catch {
    // not JSON: not a response
  }
  return null;
}

export function parseCommand(
  payload: string,
): { device: string; params: DeviceParams } | null {
  try {
    const obj = JSON.parse(payload);
    if (!obj || typeof obj !== "object") return null;
    if (typeof obj.device !== "string" || !obj.params || typeof obj.params !== "object") {
      return null;
    }
    const params = { ...obj.params };
    if ("temperature" in params && typeof params.temperature === "string") {
      params.temperature = parseInt(params.temperature, 10); // wire may carry "20"
    }
    return { device: obj.device, params: params as DeviceParams };
  } catch {
    return null;
  }
}
