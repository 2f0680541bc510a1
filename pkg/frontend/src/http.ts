// HTTP transport: probe the gateway, post signed intents, poll state.

import type { BrowserKey, CommandJson } from "./signing.js";
import { signedPacketBody } from "./signing.js";
import type { DeviceStateJson } from "./types.js";

export interface CommandResult {
  ok: boolean;
  responses: string[];
  error?: string;
}

export async function probeGateway(gateway: string): Promise<boolean> {
  try {
    const resp = await fetch(`${gateway}/api/devices`);
    return resp.ok;
  } catch {
    return false;
  }
}

export async function postSignedCommand(
  gateway: string,
  clientId: string,
  key: BrowserKey,
  commands: CommandJson[],
): Promise<CommandResult> {
  const body = signedPacketBody(
    { client_id: clientId, issued_at: Date.now(), commands },
    key,
  );
  try {
    const resp = await fetch(`${gateway}/api/command`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body,
    });
    const parsed = await resp.json();
    if (resp.ok) {
      return {
        ok: true,
        responses: (parsed.results as { response: string }[]).map((r) => r.response),
      };
    }
    return { ok: false, responses: [], error: `${parsed.error}: ${parsed.detail}` };
  } catch (err) {
    return { ok: false, responses: [], error: String(err) };
  }
}

export async function fetchStates(source: string): Promise<DeviceStateJson[] | null> {
  try {
    const resp = await fetch(source);
    if (!resp.ok) return null;
    const parsed = await resp.json();
    return parsed.devices as DeviceStateJson[];
  } catch {
    return null;
  }
}
