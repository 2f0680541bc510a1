// Top-view home rendering helpers. Pure functions compute each device's
// visual state; renderFloorplan applies them to absolutely-positioned tiles.

import type {
  AcParams,
  BulbParams,
  DeviceLayout,
  DeviceParams,
  FanParams,
  LockParams,
} from "./types.js";

export interface DeviceVisual {
  glyph: string;
  tint: string | null; // bulb color when lit
  rotation: string | null; // AC vane transform, applied literally
  spinning: boolean; // fan animation
  caption: string;
}

export function deviceVisual(layout: DeviceLayout, params: DeviceParams): DeviceVisual {
  switch (layout.kind) {
    case "bulb": {
      const bulb = params as BulbParams;
      return {
        glyph: "\u{1F4A1}",
        tint: bulb.power ? bulb.color : null,
        rotation: null,
        spinning: false,
        caption: bulb.power ? `on ${bulb.color}` : "off",
      };
    }
    case "fan": {
      const fan = params as FanParams;
      return {
        glyph: "\u{1F300}",
        tint: null,
        rotation: null,
        spinning: fan.power,
        caption: fan.power ? "on" : "off",
      };
    }
    case "ac": {
      const ac = params as AcParams;
      return {
        glyph: "❄",
        tint: null,
        rotation: ac.power ? ac.h_direction : null,
        spinning: false,
        caption: ac.power ? `${ac.temperature}°C ${ac.h_direction}` : "off",
      };
    }
    case "lock": {
      const lock = params as LockParams;
      const locked = lock.door_status === "locked";
      return {
        glyph: locked ? "\u{1F512}" : "\u{1F513}",
        tint: null,
        rotation: null,
        spinning: false,
        caption: lock.door_status,
      };
    }
  }
}

export function renderFloorplan(
  container: HTMLElement,
  layouts: DeviceLayout[],
  states: Map<string, DeviceParams>,
  stale: boolean,
): void {
  container.replaceChildren();
  const badge = document.createElement("div");
  badge.className = stale ? "floorplan-badge stale" : "floorplan-badge live";
  badge.textContent = stale ? "disconnected" : "live";
  container.appendChild(badge);
  for (const layout of layouts) {
    const params = states.get(layout.id);
    if (!params) continue;
    const visual = deviceVisual(layout, params);
    const tile = document.createElement("div");
    tile.className = "floorplan-device";
    tile.style.left = `${layout.x}%`;
    tile.style.top = `${layout.y}%`;
    const glyph = document.createElement("div");
    glyph.className = visual.spinning ? "device-glyph spinning" : "device-glyph";
    glyph.textContent = visual.glyph;
    if (visual.tint) glyph.style.textShadow = `0 0 18px ${visual.tint}`;
    if (visual.tint) glyph.style.backgroundColor = visual.tint;
    if (visual.rotation) glyph.style.transform = visual.rotation;
    tile.appendChild(glyph);
    const caption = document.createElement("div");
    caption.className = "device-caption";
    caption.textContent = `${layout.id} · ${visual.caption}`;
    tile.appendChild(caption);
    container.appendChild(tile);
  }
}
