// Color-coded, append-only log pane with the dashboard's timestamp format:
//   -> DD/MM/YYYY @ HH:mm:ss:SSS: <class>: <text>

export type LogClass = "error" | "connection" | "command" | "response" | "action";

export const LOG_COLORS: Record<LogClass, string> = {
  error: "#e05555",
  connection: "#4da3ff",
  command: "#e0b341",
  response: "#5dc96a",
  action: "#b98ef0",
};

export interface LogLine {
  timestamp: number; // unix ms
  cls: LogClass;
  text: string;
}

function pad(value: number, width: number): string {
  return String(value).padStart(width, "0");
}

export function formatTimestamp(ms: number): string {
  const d = new Date(ms);
  return (
    `${pad(d.getDate(), 2)}/${pad(d.getMonth() + 1, 2)}/${d.getFullYear()}` +
    ` @ ${pad(d.getHours(), 2)}:${pad(d.getMinutes(), 2)}:${pad(d.getSeconds(), 2)}` +
    `:${pad(d.getMilliseconds(), 3)}`
  );
}

export function formatLine(line: LogLine): string {
  return `-> ${formatTimestamp(line.timestamp)}: ${labelFor(line.cls)}: ${line.text}`;
}

function labelFor(cls: LogClass): string {
  switch (cls) {
    case "error":
      return "Error Log";
    case "connection":
      return "Connection Log";
    case "command":
      return "Command Log";
    case "response":
      return "Response Log";
    case "action":
      return "Action";
  }
}

export class LogPane {
  readonly lines: LogLine[] = [];
  private container: HTMLElement | null = null;

  attach(container: HTMLElement): void {
    this.container = container;
  }

  append(cls: LogClass, text: string, timestamp = Date.now()): LogLine {
    const line: LogLine = { timestamp, cls, text };
    this.lines.push(line);
    if (this.container) {
      const el = document.createElement("div");
      el.className = `log-line log-${cls}`;
      el.style.color = LOG_COLORS[cls];
      el.textContent = formatLine(line);
      this.container.prepend(el); // newest on top, like the reference UI
    }
    return line;
  }

  clear(): void {
    this.lines.length = 0;
    if (this.container) this.container.replaceChildren();
  }
}
