// Dashboard wiring: config load, transport session, card rendering, log pane,
// and the live floorplan.

import { DeviceCard } from "./cards.js";
import { renderFloorplan } from "./floorplan.js";
import { fetchStates, postSignedCommand, probeGateway } from "./http.js";
import { LogPane } from "./logPane.js";
import { MqttWsClient } from "./mqttClient.js";
import { parseCommand, parseResponse } from "./payload.js";
import type { BrowserKey } from "./signing.js";
import { parseKeyFile } from "./signing.js";
import type {
  AcParams,
  BulbParams,
  DeviceParams,
  DeviceLayout,
  LockParams,
  UiConfig,
} from "./types.js";
import { TEMP_MAX, TEMP_MIN } from "./types.js";

type Protocol = "http" | "mqtt-ws";

const log = new LogPane();
const cards = new Map<string, DeviceCard>();
const floorStates = new Map<string, DeviceParams>();
let config: UiConfig;
let protocol: Protocol = "mqtt-ws";
let mqtt: MqttWsClient | null = null;
let browserKey: BrowserKey | null = null;
let clientId = "ui_client";
let lastStateSeen = 0;
let pollTimer: ReturnType<typeof setInterval> | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

async function boot(): Promise<void> {
  const resp = await fetch("./config.json");
  config = (await resp.json()) as UiConfig;
  log.attach(el("log-pane"));
  el("clear-logs").addEventListener("click", () => log.clear());
  el<HTMLInputElement>("client-id").value = clientId;
  el<HTMLInputElement>("client-id").addEventListener("change", (ev) => {
    clientId = (ev.target as HTMLInputElement).value || "ui_client";
  });
  el<HTMLInputElement>("key-file").addEventListener("change", async (ev) => {
    const input = ev.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    try {
      browserKey = parseKeyFile(await file.text());
      log.append("connection", `signing key loaded for ${clientId}`);
    } catch (err) {
      browserKey = null;
      log.append("error", `cannot read key file: ${String(err)}`);
    }
  });
  el<HTMLSelectElement>("protocol").addEventListener("change", (ev) => {
    connect((ev.target as HTMLSelectElement).value as Protocol);
  });
  for (const layout of config.layout.devices) {
    const card = new DeviceCard(layout.id, layout.kind, layout.room);
    cards.set(layout.id, card);
    floorStates.set(layout.id, card.confirmed);
  }
  renderCards();
  repaintFloorplan();
  connect(protocol);
}

// -- session ------------------------------------------------------------------

function connect(next: Protocol): void {
  protocol = next;
  mqtt?.stop();
  mqtt = null;
  if (pollTimer !== null) clearInterval(pollTimer);
  pollTimer = null;
  if (protocol === "mqtt-ws") connectMqtt();
  else connectHttp();
}

function connectMqtt(): void {
  const prefix = config.topic_prefix;
  mqtt = new MqttWsClient({
    url: config.broker_ws,
    clientId,
    subscriptions: [`${prefix}/+`, `${prefix}/connection`],
    onConnected: () => {
      log.append("connection", "Client UI App connected");
      mqtt?.publish(
        `${prefix}/connection`,
        JSON.stringify({ connection: "Client UI App connected" }),
      );
    },
    onReconnecting: () => log.append("connection", "reconnecting"),
    onMessage: (topic, payload) => onMqttMessage(topic, payload),
  });
  mqtt.start();
}

function onMqttMessage(topic: string, payloadBytes: Uint8Array): void {
  const prefix = config.topic_prefix;
  const payload = new TextDecoder().decode(payloadBytes);
  lastStateSeen = Date.now();
  if (topic === `${prefix}/connection`) {
    log.append("connection", `peer: ${payload}`);
    return;
  }
  const device = topic.slice(prefix.length + 1);
  const response = parseResponse(payload);
  if (response !== null) {
    log.append("response", `Response received from Emulator: ${topic}: ${payload}`);
    cards.get(device)?.confirm();
    renderCards();
    return;
  }
  const command = parseCommand(payload);
  if (command !== null) {
    // commands on the shared topics are the emulator's incoming state
    floorStates.set(command.device, command.params);
    const card = cards.get(command.device);
    card?.absorb(command.params);
    repaintFloorplan();
    renderCards();
  }
}

function connectHttp(): void {
  void probeGateway(config.gateway).then((ok) => {
    if (ok) log.append("connection", `Client UI App connected to ${config.gateway}`);
    else log.append("error", `gateway unreachable at ${config.gateway}`);
  });
  const source = config.emulator_state ?? `${config.gateway}/api/state`;
  pollTimer = setInterval(async () => {
    const states = await fetchStates(source);
    if (states === null) return;
    lastStateSeen = Date.now();
    for (const state of states) {
      floorStates.set(state.id, state.params as unknown as DeviceParams);
      cards.get(state.id)?.absorb(state.params as unknown as DeviceParams);
    }
    repaintFloorplan();
    renderCards();
  }, 1000);
}

// -- sending --------------------------------------------------------------------

function sendFromCard(card: DeviceCard, params: DeviceParams): void {
  const event = card.request(params, (device, payload) => {
    if (protocol === "mqtt-ws") {
      const topic = `${config.topic_prefix}/${device}`;
      const sent = mqtt?.publish(topic, payload) ?? false;
      if (sent) log.append("command", `Command sent to Emulator: ${topic}: ${payload}`);
      return sent;
    }
    if (!browserKey) {
      log.append("error", "no signing key loaded; upload the key file first");
      return false;
    }
    log.append("command", `Command sent to Device App: ${payload}`);
    void postSignedCommand(config.gateway, clientId, browserKey, [
      { device, params: JSON.parse(payload).params },
    ]).then((result) => {
      if (result.ok) {
        for (const response of result.responses) {
          log.append("response", `Response received: ${response}`);
        }
        card.confirm();
      } else {
        log.append("error", `command rejected: ${result.error ?? "unknown"}`);
        card.revert();
      }
      renderCards();
    });
    return true;
  }, () => {
    log.append("error", `${card.id}: no confirmation, reverting`);
    renderCards();
  });
  if (event.kind === "suppressed" && event.note) log.append("action", event.note);
  renderCards();
}

// -- rendering --------------------------------------------------------------------

function renderCards(): void {
  const host = el("cards");
  host.replaceChildren();
  for (const card of cards.values()) {
    host.appendChild(renderCard(card));
  }
}

function renderCard(card: DeviceCard): HTMLElement {
  const root = document.createElement("div");
  root.className = card.active ? "card" : "card inactive";
  const title = document.createElement("h3");
  title.textContent = `${card.id} (${card.room})`;
  root.appendChild(title);

  const soft = document.createElement("label");
  soft.className = "soft-power";
  const softToggle = document.createElement("input");
  softToggle.type = "checkbox";
  softToggle.checked = card.active;
  softToggle.addEventListener("change", () => {
    const event = card.setActive(softToggle.checked);
    if (event.note) log.append("action", event.note);
    renderCards();
  });
  soft.append(softToggle, document.createTextNode(" soft power"));
  root.appendChild(soft);

  const controls = document.createElement("div");
  controls.className = "controls";
  const disabled = !card.controlsEnabled;
  const params = card.displayed;

  if (card.kind === "bulb") {
    const bulb = params as BulbParams;
    controls.appendChild(
      toggleButton(bulb.power, disabled, () =>
        sendFromCard(card, { ...bulb, power: !bulb.power }),
      ),
    );
    const color = document.createElement("input");
    color.type = "color";
    color.value = bulb.color;
    color.disabled = disabled;
    color.addEventListener("change", () =>
      sendFromCard(card, { ...bulb, color: color.value.toLowerCase() }),
    );
    controls.appendChild(color);
  } else if (card.kind === "fan") {
    const fan = params as { power: boolean };
    controls.appendChild(
      toggleButton(fan.power, disabled, () =>
        sendFromCard(card, { power: !fan.power }),
      ),
    );
  } else if (card.kind === "ac") {
    const ac = params as AcParams;
    controls.appendChild(
      toggleButton(ac.power, disabled, () => sendFromCard(card, { ...ac, power: !ac.power })),
    );
    const stepper = document.createElement("div");
    stepper.className = "stepper";
    const down = document.createElement("button");
    down.textContent = "−";
    down.disabled = disabled || ac.temperature <= TEMP_MIN;
    down.addEventListener("click", () =>
      sendFromCard(card, { ...ac, temperature: ac.temperature - 1 }),
    );
    const reading = document.createElement("span");
    reading.textContent = `${ac.temperature}°C`;
    const up = document.createElement("button");
    up.textContent = "+";
    up.disabled = disabled || ac.temperature >= TEMP_MAX;
    up.addEventListener("click", () =>
      sendFromCard(card, { ...ac, temperature: ac.temperature + 1 }),
    );
    stepper.append(down, reading, up);
    controls.appendChild(stepper);
    const vane = document.createElement("select");
    vane.disabled = disabled;
    for (const [label, value] of [
      ["left", "rotate(-45deg)"],
      ["center", "rotate(0deg)"],
      ["right", "rotate(45deg)"],
    ] as const) {
      const option = document.createElement("option");
      option.value = value;
      option.textContent = label;
      option.selected = ac.h_direction === value;
      vane.appendChild(option);
    }
    vane.addEventListener("change", () =>
      sendFromCard(card, { ...ac, h_direction: vane.value as AcParams["h_direction"] }),
    );
    controls.appendChild(vane);
  } else {
    const lock = params as LockParams;
    const button = document.createElement("button");
    button.textContent = lock.door_status === "locked" ? "unlock" : "lock";
    button.disabled = disabled;
    button.addEventListener("click", () =>
      sendFromCard(card, {
        door_status: lock.door_status === "locked" ? "unlocked" : "locked",
      }),
    );
    controls.appendChild(button);
  }
  root.appendChild(controls);

  const status = document.createElement("div");
  status.className = "card-status";
  status.textContent = card.pending ? "pending…" : "confirmed";
  root.appendChild(status);
  return root;
}

function toggleButton(on: boolean, disabled: boolean, onClick: () => void): HTMLElement {
  const button = document.createElement("button");
  button.className = on ? "power on" : "power off";
  button.textContent = on ? "turn off" : "turn on";
  button.disabled = disabled;
  button.addEventListener("click", onClick);
  return button;
}

function repaintFloorplan(): void {
  const stale = Date.now() - lastStateSeen > 10_000;
  renderFloorplan(el("floorplan"), config.layout.devices as DeviceLayout[], floorStates, stale);
}

setInterval(() => repaintFloorplan(), 5000);

void boot();
