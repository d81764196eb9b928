/** Editor state: the record queue, the active record, and the edit buffer.
 *
 * Every edit mutates the buffer only; nothing reaches the server until
 * verify/reject submits the whole buffer atomically.  No action here can
 * leave a dangling connection: adding one checks both endpoints, and
 * deleting a label cascades over its connections (behind a confirm step).
 */

import type {
  Connection,
  Label,
  PreAnnotation,
  RecordSummary,
  ReviewRecord,
  Schema,
} from "./types.js";
import { validatePreAnnotation } from "./validate.js";

export interface SelectionRange {
  start: number;
  end: number;
}

export class EditorState {
  schema: Schema = { entities: [], relations: [], symmetric: [] };
  queue: RecordSummary[] = [];
  active: ReviewRecord | null = null;
  labels: Label[] = [];
  connections: Connection[] = [];
  dirty = false;
  selection: SelectionRange | null = null;
  selectedLabelId: string | null = null;
  modelVersion = 0;
  private nextLabelSeq = 0;

  loadRecord(record: ReviewRecord): void {
    this.active = record;
    const source = record.corrected ?? record.pre;
    this.labels = source.labels.map((l) => ({ ...l }));
    this.connections = source.connections.map((c) => ({ ...c }));
    this.dirty = false;
    this.selection = null;
    this.selectedLabelId = null;
    this.nextLabelSeq = 0;
  }

  clearActive(): void {
    this.active = null;
    this.labels = [];
    this.connections = [];
    this.dirty = false;
    this.selection = null;
    this.selectedLabelId = null;
  }

  get content(): string {
    return this.active ? this.active.pre.content : "";
  }

  label(id: string): Label | undefined {
    return this.labels.find((l) => l.id === id);
  }

  connectionsOf(labelId: string): Connection[] {
    return this.connections.filter((c) => c.head === labelId || c.tail === labelId);
  }

  private freshLabelId(): string {
    const used = new Set(this.labels.map((l) => l.id));
    let id: string;
    do {
      id = `E${this.nextLabelSeq++}`;
    } while (used.has(id));
    return id;
  }

  addLabel(start: number, end: number, type: string): Label {
    if (!(0 <= start && start < end && end <= this.content.length)) {
      throw new Error(`cannot add label: offsets (${start}, ${end}) out of range`);
    }
    if (!this.schema.entities.includes(type)) {
      throw new Error(`cannot add label: type ${type} not in schema`);
    }
    const label: Label = { id: this.freshLabelId(), start, end, type, confidence: 1.0 };
    this.labels.push(label);
    this.labels.sort((a, b) => a.start - b.start || a.end - b.end);
    this.dirty = true;
    return label;
  }

  resizeLabel(id: string, start: number, end: number): void {
    const label = this.mustLabel(id);
    if (!(0 <= start && start < end && end <= this.content.length)) {
      throw new Error(`cannot resize ${id}: offsets (${start}, ${end}) out of range`);
    }
    label.start = start;
    label.end = end;
    this.dirty = true;
  }

  retypeLabel(id: string, type: string): void {
    if (!this.schema.entities.includes(type)) {
      throw new Error(`cannot retype ${id}: type ${type} not in schema`);
    }
    this.mustLabel(id).type = type;
    this.dirty = true;
  }

  /**
   * Delete a label.  When the label still has connections the deletion is
   * refused unless `cascade` is set, so the caller can confirm first; with
   * `cascade` the connections disappear with the label.
   */
  deleteLabel(id: string, cascade = false): { deleted: boolean; connections: number } {
    this.mustLabel(id);
    const attached = this.connectionsOf(id);
    if (attached.length > 0 && !cascade) {
      return { deleted: false, connections: attached.length };
    }
    this.connections = this.connections.filter((c) => c.head !== id && c.tail !== id);
    this.labels = this.labels.filter((l) => l.id !== id);
    if (this.selectedLabelId === id) this.selectedLabelId = null;
    this.dirty = true;
    return { deleted: true, connections: attached.length };
  }

  addConnection(head: string, tail: string, type: string): Connection {
    this.mustLabel(head);
    this.mustLabel(tail);
    if (head === tail) {
      throw new Error("cannot connect a label to itself");
    }
    if (!this.schema.relations.includes(type)) {
      throw new Error(`cannot add connection: type ${type} not in schema`);
    }
    const conn: Connection = { head, tail, type, confidence: 1.0 };
    this.connections.push(conn);
    this.dirty = true;
    return conn;
  }

  retypeConnection(index: number, type: string): void {
    const conn = this.connections[index];
    if (!conn) throw new Error(`no connection at index ${index}`);
    if (!this.schema.relations.includes(type)) {
      throw new Error(`cannot retype connection: type ${type} not in schema`);
    }
    conn.type = type;
    this.dirty = true;
  }

  deleteConnection(index: number): void {
    if (!this.connections[index]) throw new Error(`no connection at index ${index}`);
    this.connections.splice(index, 1);
    this.dirty = true;
  }

  /** The exact pre-annotation the verify/reject submission will carry. */
  bufferPreAnnotation(): PreAnnotation {
    if (!this.active) throw new Error("no active record");
    return {
      doc_id: this.active.doc_id,
      content: this.active.pre.content,
      labels: this.labels.map((l) => ({ ...l })),
      connections: this.connections.map((c) => ({ ...c })),
      model_version: this.active.pre.model_version,
    };
  }

  bufferErrors(): string[] {
    if (!this.active) return ["no active record"];
    return validatePreAnnotation(this.bufferPreAnnotation(), this.schema);
  }

  canSubmit(): boolean {
    return this.active !== null && this.bufferErrors().length === 0;
  }

  verifiedCount(): number {
    return this.queue.filter((r) => r.status === "verified").length;
  }

  nextPendingDocId(): string | null {
    const current = this.active?.doc_id;
    const pending = this.queue.filter(
      (r) => r.status === "pending" && r.doc_id !== current,
    );
    return pending.length > 0 ? pending[0]!.doc_id : null;
  }

  private mustLabel(id: string): Label {
    const label = this.label(id);
    if (!label) throw new Error(`unknown label ${id}`);
    return label;
  }
}
