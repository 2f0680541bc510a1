// Shared wire and config types for the dashboard and floorplan.

export type DeviceKind = "bulb" | "fan" | "ac" | "lock";

export interface BulbParams {
  power: boolean;
  color: string; // #rrggbb
}

export interface FanParams {
  power: boolean;
}

export interface AcParams {
  power: boolean;
  h_direction: "rotate(0deg)" | "rotate(-45deg)" | "rotate(45deg)";
  temperature: number; // 18..26
}

export interface LockParams {
  door_status: "locked" | "unlocked";
}

export type DeviceParams = BulbParams | FanParams | AcParams | LockParams;

export const TEMP_MIN = 18;
export const TEMP_MAX = 26;

export interface DeviceLayout {
  id: string;
  kind: DeviceKind;
  room: string;
  x: number; // percent of floorplan width
  y: number; // percent of floorplan height
}

export interface UiConfig {
  gateway: string; // http://host:port
  broker_ws: string; // ws://host:port/mqtt
  topic_prefix: string;
  emulator_state?: string; // optional GET /emulator/state source
  layout: { devices: DeviceLayout[] };
}

export interface DeviceStateJson {
  id: string;
  kind: DeviceKind;
  room: string;
  params: Record<string, unknown>;
}

export function defaultParams(kind: DeviceKind): DeviceParams {
  switch (kind) {
    case "bulb":
      return { power: false, color: "#ffffff" };
    case "fan":
      return { power: false };
    case "ac":
      return { power: false, h_direction: "rotate(0deg)", temperature: 20 };
    case "lock":
      return { door_status: "locked" };
  }
}
