/** In-memory fixture backend speaking the review service's HTTP contract.
 *
 * Mirrors the server's semantics (status machine, validation codes, retrain
 * mutual exclusion) and records every raw PUT body so tests can byte-compare
 * what the server received against the UI buffer.
 */

import type {
  PreAnnotation,
  RecordStatus,
  RetrainJob,
  ReviewRecord,
  Schema,
} from "../src/types.js";
import { validatePreAnnotation } from "../src/validate.js";

const TRANSITIONS: Record<string, RecordStatus[]> = {
  pending: ["in_review"],
  in_review: ["verified", "rejected"],
  verified: [],
  rejected: [],
};

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export class FixtureBackend {
  records = new Map<string, ReviewRecord>();
  jobs = new Map<number, RetrainJob>();
  retrainRunning = false;
  /** When false, POST /api/retrain leaves the job in "running" until completeJob(). */
  autoCompleteJobs = true;
  rejectNextPut: { status: number; error: string } | null = null;
  lastPutBody: string | null = null;
  putBodies: string[] = [];
  modelVersion = 1;
  private nextJob = 1;

  constructor(public schema: Schema) {}

  addPending(pre: PreAnnotation): void {
    this.records.set(pre.doc_id, {
      doc_id: pre.doc_id,
      status: "pending",
      pre,
      corrected: null,
      reviewer: "",
      created_at: 1000,
      updated_at: 1000,
      model_version: pre.model_version,
    });
  }

  completeJob(jobId: number, ok = true): void {
    const job = this.jobs.get(jobId);
    if (!job) throw new Error(`no job ${jobId}`);
    if (ok) {
      this.modelVersion += 1;
      job.state = "done";
      job.produced_version = this.modelVersion;
    } else {
      job.state = "failed";
      job.error = "regression gate: macro F1 fell below base";
    }
    this.retrainRunning = false;
  }

  fetch = async (input: string, init?: RequestInit): Promise<Response> => {
    const url = new URL(input, "http://fixture");
    const method = (init?.method ?? "GET").toUpperCase();
    const path = url.pathname;

    if (method === "GET" && path === "/api/schema") {
      return json(200, this.schema);
    }
    if (method === "GET" && path === "/api/docs") {
      const status = url.searchParams.get("status");
      const records = [...this.records.values()]
        .filter((r) => !status || r.status === status)
        .sort((a, b) => a.doc_id.localeCompare(b.doc_id));
      return json(200, {
        total: records.length,
        offset: 0,
        records: records.map((r) => ({
          doc_id: r.doc_id,
          status: r.status,
          labels: (r.corrected ?? r.pre).labels.length,
          connections: (r.corrected ?? r.pre).connections.length,
          reviewer: r.reviewer,
          updated_at: r.updated_at,
          model_version: r.model_version,
        })),
      });
    }
    const docMatch = /^\/api\/docs\/([^/]+)$/.exec(path);
    if (method === "GET" && docMatch) {
      const record = this.records.get(decodeURIComponent(docMatch[1]!));
      return record ? json(200, record) : json(404, { error: "unknown document" });
    }
    const putMatch = /^\/api\/docs\/([^/]+)\/annotations$/.exec(path);
    if (method === "PUT" && putMatch) {
      return this.handlePut(decodeURIComponent(putMatch[1]!), String(init?.body ?? ""));
    }
    if (method === "POST" && path === "/api/retrain") {
      return this.handleRetrain();
    }
    const jobMatch = /^\/api\/retrain\/jobs\/(\d+)$/.exec(path);
    if (method === "GET" && jobMatch) {
      const job = this.jobs.get(Number(jobMatch[1]));
      return job ? json(200, job) : json(404, { error: "unknown job" });
    }
    if (method === "GET" && path === "/api/models") {
      return json(200, {
        current: this.modelVersion,
        models: Array.from({ length: this.modelVersion }, (_, i) => ({
          version: i + 1,
          active: i + 1 === this.modelVersion,
          metrics: {},
        })),
      });
    }
    return json(404, { error: `no route ${method} ${path}` });
  };

  private handlePut(docId: string, body: string): Response {
    const record = this.records.get(docId);
    if (!record) return json(404, { error: "unknown document" });
    if (this.rejectNextPut) {
      const forced = this.rejectNextPut;
      this.rejectNextPut = null;
      return json(forced.status, { error: forced.error });
    }
    this.lastPutBody = body;
    this.putBodies.push(body);
    let payload: { status?: string; corrected?: PreAnnotation };
    try {
      payload = JSON.parse(body) as { status?: string; corrected?: PreAnnotation };
    } catch {
      return json(400, { error: "request body is not valid JSON" });
    }
    const status = payload.status as RecordStatus | undefined;
    if (!status || !["in_review", "verified", "rejected"].includes(status)) {
      return json(400, { error: `unsupported target status ${String(status)}` });
    }
    let corrected: PreAnnotation | null = null;
    if (payload.corrected != null) {
      corrected = payload.corrected;
      const errors = validatePreAnnotation(corrected, this.schema);
      if (errors.length > 0) {
        const code = errors.some((e) => e.includes("not in schema")) ? 422 : 400;
        return json(code, { error: errors.join("; ") });
      }
      if (corrected.doc_id !== docId) {
        return json(400, { error: "corrected.doc_id does not match the record" });
      }
    }
    if ((status === "verified" || status === "rejected") && corrected === null) {
      return json(400, { error: `status ${status} requires a corrected pre-annotation` });
    }
    if (status === "in_review" && corrected !== null) {
      return json(400, { error: "claiming a record must not carry corrections" });
    }
    if (status === record.status) {
      if (JSON.stringify(corrected) === JSON.stringify(record.corrected)) {
        return json(200, record);
      }
      return json(409, { error: `record already ${status} with different content` });
    }
    if (!TRANSITIONS[record.status]!.includes(status)) {
      return json(409, { error: `illegal status transition ${record.status} -> ${status}` });
    }
    record.status = status;
    record.corrected = corrected;
    record.updated_at += 1;
    return json(200, record);
  }

  private handleRetrain(): Response {
    if (this.retrainRunning) {
      return json(409, { error: "a retrain job is already running" });
    }
    const verified = [...this.records.values()].filter((r) => r.status === "verified");
    if (verified.length === 0) {
      return json(409, { error: "no verified records to retrain on" });
    }
    const job: RetrainJob = {
      job_id: this.nextJob++,
      base_version: this.modelVersion,
      record_count: verified.length,
      state: "running",
      produced_version: null,
      error: "",
      base_metric: null,
      new_metric: null,
    };
    this.jobs.set(job.job_id, job);
    this.retrainRunning = true;
    if (this.autoCompleteJobs) {
      this.completeJob(job.job_id);
      return json(202, { ...job, state: "running" });
    }
    return json(202, job);
  }
}
