/** Shared types for the viewer. */

export type Mode = "2D" | "3D";

export interface ViewState {
  mode: Mode;
  pointScale: number;
  activeLayoutId: string | null;
  activeLabel: string | null;
  selectorRadius: number;
}

export interface ProjectSummary {
  project_id: string;
  name: string;
  dim: number;
  label_schema: string[];
  revision: number;
  records: number;
}

export interface LayoutInfo {
  layout_id: string;
  project_id: string;
  reducer_name: string;
  out_dim: number;
  count: number;
  record_ids: string[];
  labels: Record<string, number>;
  label_schema: string[];
}

export interface Neighbor {
  record_id: string;
  distance: number;
}

export interface QueryResponse {
  position: number[] | null;
  neighbors: Neighbor[];
  provider: string;
  query_echo: string;
}

export interface JobTicket {
  job_id: string;
  kind: string;
  state: "queued" | "running" | "done" | "failed";
  progress: number;
  result_ref: string | null;
  error: string | null;
}

export interface Preview {
  modality: "text" | "image" | "video";
  payload: string;
}
