/** Wire types mirroring the review service's JSON exactly. */

export interface Schema {
  entities: string[];
  relations: string[];
  symmetric: string[];
}

export interface Label {
  id: string;
  start: number;
  end: number;
  type: string;
  confidence: number;
}

export interface Connection {
  head: string;
  tail: string;
  type: string;
  confidence: number;
}

export interface PreAnnotation {
  doc_id: string;
  content: string;
  labels: Label[];
  connections: Connection[];
  model_version: number;
}

export type RecordStatus = "pending" | "in_review" | "verified" | "rejected";

export interface RecordSummary {
  doc_id: string;
  status: RecordStatus;
  labels: number;
  connections: number;
  reviewer: string;
  updated_at: number;
  model_version: number;
}

export interface ReviewRecord {
  doc_id: string;
  status: RecordStatus;
  pre: PreAnnotation;
  corrected: PreAnnotation | null;
  reviewer: string;
  created_at: number;
  updated_at: number;
  model_version: number;
}

export interface DocsPage {
  total: number;
  offset: number;
  records: RecordSummary[];
}

export interface RetrainJob {
  job_id: number;
  base_version: number;
  record_count: number;
  state: "queued" | "running" | "done" | "failed";
  produced_version: number | null;
  error: string;
  base_metric: number | null;
  new_metric: number | null;
}

export interface ModelInfo {
  version: number;
  active: boolean;
  metrics: Record<string, number>;
}

export interface ModelsResponse {
  models: ModelInfo[];
  current: number;
}
