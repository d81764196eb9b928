/** Controller: wires the editor state, renderers, and the API client.
 *
 * Submissions are optimistic: the UI advances immediately and rolls the
 * buffer back if the server rejects the payload (4xx), surfacing the error
 * inline.  Retrain runs through a polled job with the banner tracking the
 * served model version.
 */

import { ApiClient, ApiError } from "./api.js";
import { renderConnections, renderDocument, renderLegend, renderQueue } from "./render.js";
import { EditorState } from "./state.js";
import type { RecordStatus, RetrainJob, ReviewRecord } from "./types.js";

export interface ControllerOptions {
  /** Confirmation hook (cascade deletes, dirty navigation); defaults to window.confirm. */
  confirm?: (message: string) => boolean;
  /** Milliseconds between retrain job polls. */
  retrainPollMs?: number;
}

export class ReviewController {
  readonly state = new EditorState();
  lastError = "";
  retrainStatus = "";
  private readonly confirmFn: (message: string) => boolean;
  private readonly retrainPollMs: number;
  private queueTimer: ReturnType<typeof setInterval> | null = null;

  constructor(
    readonly api: ApiClient,
    readonly root: Document,
    options: ControllerOptions = {},
  ) {
    this.confirmFn = options.confirm ?? ((message) => globalThis.confirm(message));
    this.retrainPollMs = options.retrainPollMs ?? 500;
  }

  private byId<T extends HTMLElement>(id: string): T {
    const node = this.root.getElementById(id);
    if (!node) throw new Error(`missing #${id} in the page`);
    return node as T;
  }

  async init(): Promise<void> {
    this.state.schema = await this.api.getSchema();
    await this.refreshModels();
    await this.refreshQueue();
    this.bindControls();
    this.renderAll();
  }

  async refreshQueue(): Promise<void> {
    const page = await this.api.listDocs();
    this.state.queue = page.records;
  }

  async refreshModels(): Promise<void> {
    const models = await this.api.getModels();
    this.state.modelVersion = models.current;
  }

  startQueuePolling(intervalMs = 5000): void {
    this.stopQueuePolling();
    this.queueTimer = setInterval(() => {
      void this.refreshQueue().then(() => this.renderAll());
    }, intervalMs);
  }

  stopQueuePolling(): void {
    if (this.queueTimer !== null) {
      clearInterval(this.queueTimer);
      this.queueTimer = null;
    }
  }

  // -- record flow ----------------------------------------------------------

  async selectRecord(docId: string): Promise<void> {
    if (this.state.dirty && !this.confirmFn("Discard unsaved edits?")) {
      return;
    }
    let record = await this.api.getDoc(docId);
    if (record.status === "pending") {
      record = await this.api.putAnnotations(docId, "in_review");
    }
    this.state.loadRecord(record);
    this.lastError = "";
    this.renderAll();
  }

  private async submit(status: RecordStatus): Promise<boolean> {
    if (!this.state.active) return false;
    if (!this.state.canSubmit()) {
      this.lastError = this.state.bufferErrors().join("; ");
      this.renderAll();
      return false;
    }
    const docId = this.state.active.doc_id;
    const record = this.state.active;
    const payload = this.state.bufferPreAnnotation();
    // optimistic: move on, roll back on rejection
    const nextDoc = this.state.nextPendingDocId();
    try {
      await this.api.putAnnotations(docId, status, payload);
    } catch (error) {
      if (error instanceof ApiError) {
        this.state.loadRecord(record);
        this.state.dirty = true;
        this.lastError = `${status} rejected (${error.status}): ${error.message}`;
        this.renderAll();
        return false;
      }
      throw error;
    }
    this.state.dirty = false;
    this.lastError = "";
    await this.refreshQueue();
    if (nextDoc !== null) {
      await this.selectRecord(nextDoc);
    } else {
      this.state.clearActive();
      this.renderAll();
    }
    return true;
  }

  verify(): Promise<boolean> {
    return this.submit("verified");
  }

  reject(): Promise<boolean> {
    return this.submit("rejected");
  }

  // -- edit actions ---------------------------------------------------------

  deleteLabelWithConfirm(labelId: string): boolean {
    const first = this.state.deleteLabel(labelId, false);
    if (first.deleted) {
      this.renderAll();
      return true;
    }
    const ok = this.confirmFn(
      `Deleting this label also removes ${first.connections} connection(s). Continue?`,
    );
    if (!ok) return false;
    this.state.deleteLabel(labelId, true);
    this.renderAll();
    return true;
  }

  retypeSelected(type: string): void {
    if (this.state.selectedLabelId) {
      this.state.retypeLabel(this.state.selectedLabelId, type);
      this.renderAll();
    }
  }

  async retrain(): Promise<RetrainJob | null> {
    this.retrainStatus = "";
    let job: RetrainJob;
    try {
      job = await this.api.postRetrain({});
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        this.retrainStatus = error.message.includes("running")
          ? "retrain already running"
          : error.message;
        this.renderBanner();
        return null;
      }
      throw error;
    }
    this.retrainStatus = `job ${job.job_id} running over ${job.record_count} record(s)`;
    this.renderBanner();
    while (job.state === "queued" || job.state === "running") {
      await new Promise((resolve) => setTimeout(resolve, this.retrainPollMs));
      job = await this.api.getRetrainJob(job.job_id);
    }
    if (job.state === "done") {
      await this.refreshModels();
      this.retrainStatus = `model version ${job.produced_version} published`;
    } else {
      this.retrainStatus = `retrain failed: ${job.error}`;
    }
    this.renderBanner();
    return job;
  }

  // -- DOM wiring -----------------------------------------------------------

  private bindControls(): void {
    this.byId<HTMLButtonElement>("verify-button").addEventListener("click", () => {
      void this.verify();
    });
    this.byId<HTMLButtonElement>("reject-button").addEventListener("click", () => {
      void this.reject();
    });
    this.byId<HTMLButtonElement>("retrain-button").addEventListener("click", () => {
      void this.retrain();
    });
    this.byId<HTMLButtonElement>("label-delete").addEventListener("click", () => {
      if (this.state.selectedLabelId) this.deleteLabelWithConfirm(this.state.selectedLabelId);
    });
    this.byId<HTMLButtonElement>("label-add").addEventListener("click", () => {
      const selection = this.state.selection;
      const type = this.byId<HTMLSelectElement>("label-type").value;
      if (selection && type) {
        this.state.addLabel(selection.start, selection.end, type);
        this.renderAll();
      }
    });
    this.byId<HTMLSelectElement>("label-type").addEventListener("change", () => {
      const type = this.byId<HTMLSelectElement>("label-type").value;
      if (this.state.selectedLabelId && type) this.retypeSelected(type);
    });
    const applyResize = () => {
      const id = this.state.selectedLabelId;
      if (!id) return;
      const start = Number(this.byId<HTMLInputElement>("label-start").value);
      const end = Number(this.byId<HTMLInputElement>("label-end").value);
      try {
        this.state.resizeLabel(id, start, end);
        this.lastError = "";
      } catch (error) {
        this.lastError = String(error instanceof Error ? error.message : error);
      }
      this.renderAll();
    };
    this.byId<HTMLInputElement>("label-start").addEventListener("change", applyResize);
    this.byId<HTMLInputElement>("label-end").addEventListener("change", applyResize);
    this.byId<HTMLButtonElement>("conn-add").addEventListener("click", () => {
      const head = this.byId<HTMLSelectElement>("conn-head").value;
      const tail = this.byId<HTMLSelectElement>("conn-tail").value;
      const type = this.byId<HTMLSelectElement>("conn-type-new").value;
      try {
        this.state.addConnection(head, tail, type);
        this.lastError = "";
      } catch (error) {
        this.lastError = String(error instanceof Error ? error.message : error);
      }
      this.renderAll();
    });
    this.root.addEventListener("keydown", (event) => this.onKeydown(event as KeyboardEvent));
  }

  /** Keyboard path: digits retype the selected label, v verifies, x rejects. */
  onKeydown(event: KeyboardEvent): void {
    const target = event.target as HTMLElement | null;
    if (target && ["INPUT", "SELECT", "TEXTAREA"].includes(target.tagName)) return;
    if (/^[1-9]$/.test(event.key)) {
      const type = this.state.schema.entities[Number(event.key) - 1];
      if (type && this.state.selectedLabelId) {
        this.retypeSelected(type);
        event.preventDefault();
      }
    } else if (event.key === "v") {
      void this.verify();
      event.preventDefault();
    } else if (event.key === "x") {
      void this.reject();
      event.preventDefault();
    } else if (event.key === "Delete" && this.state.selectedLabelId) {
      this.deleteLabelWithConfirm(this.state.selectedLabelId);
      event.preventDefault();
    }
  }

  selectLabel(labelId: string | null): void {
    this.state.selectedLabelId = labelId;
    this.renderAll();
  }

  setSelection(start: number, end: number): void {
    this.state.selection = { start, end };
    this.renderSelectionInfo();
  }

  // -- rendering ------------------------------------------------------------

  renderAll(): void {
    renderQueue(
      this.byId("queue"),
      this.state.queue,
      this.state.active?.doc_id ?? null,
      (docId) => void this.selectRecord(docId),
    );
    renderLegend(this.byId("legend"), this.state.schema);
    renderDocument(
      this.byId("document"),
      this.state.content,
      this.state.labels,
      this.state.schema,
      this.state.selectedLabelId,
      { onLabelClick: (id) => this.selectLabel(id) },
    );
    renderConnections(
      this.byId("connections"),
      this.state.connections,
      (id) => {
        const label = this.state.label(id);
        return label ? `${this.state.content.slice(label.start, label.end)} [${label.type}]` : id;
      },
      this.state.schema,
      {
        onConnectionDelete: (index) => {
          this.state.deleteConnection(index);
          this.renderAll();
        },
        onConnectionRetype: (index, type) => {
          this.state.retypeConnection(index, type);
          this.renderAll();
        },
      },
    );
    this.renderEditor();
    this.renderBanner();
    this.renderSelectionInfo();
  }

  private renderEditor(): void {
    const typeSelect = this.byId<HTMLSelectElement>("label-type");
    if (typeSelect.options.length !== this.state.schema.entities.length) {
      typeSelect.textContent = "";
      for (const type of this.state.schema.entities) {
        const option = this.root.createElement("option") as HTMLOptionElement;
        option.value = type;
        option.textContent = type;
        typeSelect.appendChild(option);
      }
    }
    const selected = this.state.selectedLabelId
      ? this.state.label(this.state.selectedLabelId)
      : undefined;
    this.byId<HTMLInputElement>("label-start").value = selected ? String(selected.start) : "";
    this.byId<HTMLInputElement>("label-end").value = selected ? String(selected.end) : "";
    if (selected) typeSelect.value = selected.type;
    for (const id of ["conn-head", "conn-tail"]) {
      const select = this.byId<HTMLSelectElement>(id);
      select.textContent = "";
      for (const label of this.state.labels) {
        const option = this.root.createElement("option") as HTMLOptionElement;
        option.value = label.id;
        option.textContent = `${label.id}: ${this.state.content.slice(label.start, label.end)}`;
        select.appendChild(option);
      }
    }
    const connType = this.byId<HTMLSelectElement>("conn-type-new");
    if (connType.options.length !== this.state.schema.relations.length) {
      connType.textContent = "";
      for (const type of this.state.schema.relations) {
        const option = this.root.createElement("option") as HTMLOptionElement;
        option.value = type;
        option.textContent = type;
        connType.appendChild(option);
      }
    }
    const errors = this.state.active ? this.state.bufferErrors() : [];
    const errorBox = this.byId("errors");
    errorBox.textContent = [this.lastError, ...errors].filter(Boolean).join("; ");
    const submittable = this.state.active !== null && errors.length === 0;
    this.byId<HTMLButtonElement>("verify-button").disabled = !submittable;
    this.byId<HTMLButtonElement>("reject-button").disabled = !submittable;
  }

  private renderBanner(): void {
    this.byId("banner-version").textContent = `model v${this.state.modelVersion}`;
    this.byId("verified-badge").textContent = String(this.state.verifiedCount());
    this.byId("retrain-status").textContent = this.retrainStatus;
    const running = this.retrainStatus.includes("running");
    const button = this.byId<HTMLButtonElement>("retrain-button");
    button.disabled = running;
    button.title = running ? "retrain already running" : "retrain on verified records";
    const dirtyFlag = this.byId("dirty-flag");
    dirtyFlag.textContent = this.state.dirty ? "● unsaved edits" : "";
  }

  private renderSelectionInfo(): void {
    const info = this.byId("selection-info");
    const selection = this.state.selection;
    info.textContent = selection
      ? `selection ${selection.start}–${selection.end}: ${JSON.stringify(
          this.state.content.slice(selection.start, selection.end),
        )}`
      : "";
  }
}
