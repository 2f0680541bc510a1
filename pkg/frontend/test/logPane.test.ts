import { describe, expect, it } from "vitest";

import {
  LOG_COLORS,
  LogPane,
  formatLine,
  formatTimestamp,
} from "../src/logPane.js";
import type { LogClass } from "../src/logPane.js";

describe("timestamp format", () => {
  it("renders DD/MM/YYYY @ HH:mm:ss:SSS", () => {
    // fixed instant; assert against the same local-time components
    const ms = new Date(2021, 10, 12, 16, 32, 53, 440).getTime();
    expect(formatTimestamp(ms)).toBe("12/11/2021 @ 16:32:53:440");
  });

  it("zero-pads every component", () => {
    const ms = new Date(2026, 0, 2, 3, 4, 5, 6).getTime();
    expect(formatTimestamp(ms)).toBe("02/01/2026 @ 03:04:05:006");
  });
});

describe("line format", () => {
  it("matches the arrow-prefixed layout", () => {
    const line = formatLine({
      timestamp: new Date(2021, 10, 12, 16, 34, 34, 740).getTime(),
      cls: "connection",
      text: "Client UI App connected",
    });
    expect(line).toBe(
      "-> 12/11/2021 @ 16:34:34:740: Connection Log: Client UI App connected",
    );
    expect(line).toMatch(/^-> \d{2}\/\d{2}\/\d{4} @ \d{2}:\d{2}:\d{2}:\d{3}: .+: .+$/);
  });
});

describe("colors", () => {
  it("assigns a distinct color to each of the log classes", () => {
    const classes: LogClass[] = ["error", "connection", "command", "response", "action"];
    const colors = classes.map((cls) => LOG_COLORS[cls]);
    expect(new Set(colors).size).toBe(classes.length);
  });
});

describe("pane behavior", () => {
  it("is append-only until cleared", () => {
    const pane = new LogPane();
    pane.append("command", "first");
    pane.append("response", "second");
    expect(pane.lines.map((l) => l.text)).toEqual(["first", "second"]);
    pane.append("error", "third");
    expect(pane.lines).toHaveLength(3);
    pane.clear();
    expect(pane.lines).toHaveLength(0);
  });
});
