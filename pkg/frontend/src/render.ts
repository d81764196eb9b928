/** DOM rendering: highlighted document, legend, connections, warnings.
 *
 * Overlapping labels are rendered by splitting the content at every label
 * boundary; each segment carries the covering labels' colors, with a
 * data-depth attribute and inset shadows as the nesting indicator.
 */

import { colorForType } from "./colors.js";
import type { Connection, Label, Schema } from "./types.js";

export interface RenderHooks {
  onLabelClick?: (labelId: string) => void;
  onConnectionDelete?: (index: number) => void;
  onConnectionRetype?: (index: number, type: string) => void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function splitSegments(
  content: string,
  labels: Label[],
): { start: number; end: number; covering: Label[] }[] {
  const bounds = new Set<number>([0, content.length]);
  for (const l of labels) {
    if (l.start >= 0 && l.end <= content.length && l.start < l.end) {
      bounds.add(l.start);
      bounds.add(l.end);
    }
  }
  const points = [...bounds].sort((a, b) => a - b);
  const segments: { start: number; end: number; covering: Label[] }[] = [];
  for (let i = 0; i + 1 < points.length; i++) {
    const start = points[i]!;
    const end = points[i + 1]!;
    const covering = labels.filter(
      (l) => l.start <= start && end <= l.end && l.start < l.end && l.end <= content.length && l.start >= 0,
    );
    segments.push({ start, end, covering });
  }
  return segments;
}

export function renderDocument(
  container: HTMLElement,
  content: string,
  labels: Label[],
  schema: Schema,
  selectedId: string | null,
  hooks: RenderHooks = {},
): void {
  container.textContent = "";
  const inRange = labels.filter(
    (l) => 0 <= l.start && l.start < l.end && l.end <= content.length,
  );
  const outOfRange = labels.filter((l) => !inRange.includes(l));

  if (outOfRange.length > 0) {
    const strip = el("div", "warning-strip");
    for (const label of outOfRange) {
      const chip = el(
        "span",
        "warning-chip",
        `⚠ ${label.id} (${label.type}) offsets ${label.start}–${label.end} out of range`,
      );
      chip.dataset["labelId"] = label.id;
      strip.appendChild(chip);
    }
    container.appendChild(strip);
  }

  const text = el("div", "doc-text");
  const anchorOf = new Map<string, HTMLElement>();
  for (const segment of splitSegments(content, inRange)) {
    const surface = content.slice(segment.start, segment.end);
    if (segment.covering.length === 0) {
      text.appendChild(document.createTextNode(surface));
      continue;
    }
    const innermost = segment.covering.reduce((a, b) =>
      b.start >= a.start && b.end <= a.end ? b : a,
    );
    const mark = el("span", "highlight", surface);
    mark.dataset["depth"] = String(segment.covering.length);
    mark.dataset["labels"] = segment.covering.map((l) => l.id).join(" ");
    mark.style.backgroundColor = colorForType(innermost.type, schema.entities);
    if (segment.covering.length > 1) {
      mark.classList.add("nested");
    }
    mark.title = segment.covering.map((l) => `${l.id}: ${l.type}`).join(", ");
    if (segment.covering.some((l) => l.id === selectedId)) {
      mark.classList.add("selected");
    }
    mark.addEventListener("click", (event) => {
      event.stopPropagation();
      hooks.onLabelClick?.(innermost.id);
    });
    for (const label of segment.covering) {
      if (label.start === segment.start && !anchorOf.has(label.id)) {
        anchorOf.set(label.id, mark);
        const chip = el("sup", "label-chip", label.type);
        chip.dataset["labelId"] = label.id;
        mark.prepend(chip);
      }
    }
    text.appendChild(mark);
  }
  container.appendChild(text);
  container.dataset["anchors"] = String(anchorOf.size);
}

export function renderLegend(container: HTMLElement, schema: Schema): void {
  container.textContent = "";
  const title = el("h3", "panel-title", "Legend");
  container.appendChild(title);
  const list = el("ul", "legend-list");
  for (const type of schema.entities) {
    const item = el("li", "legend-item");
    const swatch = el("span", "legend-swatch");
    swatch.style.backgroundColor = colorForType(type, schema.entities);
    item.appendChild(swatch);
    item.appendChild(el("span", "legend-name", type));
    list.appendChild(item);
  }
  container.appendChild(list);
}

export function renderConnections(
  container: HTMLElement,
  connections: Connection[],
  labelText: (id: string) => string,
  schema: Schema,
  hooks: RenderHooks = {},
): void {
  container.textContent = "";
  container.appendChild(el("h3", "panel-title", `Connections (${connections.length})`));
  const list = el("ul", "connection-list");
  connections.forEach((conn, index) => {
    const item = el("li", "connection-item");
    item.dataset["index"] = String(index);
    item.appendChild(el("span", "conn-endpoint", labelText(conn.head)));
    const select = el("select", "conn-type") as HTMLSelectElement;
    for (const type of schema.relations) {
      const opt = el("option", undefined, type) as HTMLOptionElement;
      opt.value = type;
      opt.selected = type === conn.type;
      select.appendChild(opt);
    }
    select.addEventListener("change", () => hooks.onConnectionRetype?.(index, select.value));
    item.appendChild(select);
    item.appendChild(el("span", "conn-endpoint", labelText(conn.tail)));
    const remove = el("button", "conn-delete", "×") as HTMLButtonElement;
    remove.type = "button";
    remove.title = "delete connection";
    remove.addEventListener("click", () => hooks.onConnectionDelete?.(index));
    item.appendChild(remove);
    list.appendChild(item);
  });
  container.appendChild(list);
}

export function renderQueue(
  container: HTMLElement,
  records: { doc_id: string; status: string; labels: number }[],
  activeDocId: string | null,
  onSelect: (docId: string) => void,
): void {
  container.textContent = "";
  container.appendChild(el("h3", "panel-title", "Queue"));
  const list = el("ul", "queue-list");
  for (const record of records) {
    const item = el("li", `queue-item status-${record.status}`);
    if (record.doc_id === activeDocId) item.classList.add("active");
    const button = el("button", "queue-select") as HTMLButtonElement;
    button.type = "button";
    button.textContent = `${record.doc_id} · ${record.status} · ${record.labels} labels`;
    button.addEventListener("click", () => onSelect(record.doc_id));
    item.appendChild(button);
    list.appendChild(item);
  }
  container.appendChild(list);
}
