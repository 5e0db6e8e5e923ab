/**
 * Payload shapes for the crowdlabel gateway's HTTP/JSON API.
 *
 * Every value the UI displays originates from these responses; the client
 * never derives accept/reject/resolve decisions on its own.
 */

/** One sentence as shown to an annotator. Control slots arrive in the
 * exact same shape as task slots; the payload carries no marker. */
export interface SlotPayload {
  sentence_id: string;
  tokens: string[];
  subj_span: [number, number];
  obj_span: [number, number];
  subj_type: string;
  obj_type: string;
  text: string;
}

/** A candidate label plus its definition text. */
export interface ChoicePayload {
  label: string;
  definition: string;
}

/** A claimed HIT: five slots sharing one candidate set. */
export interface HitPayload {
  hit_id: string;
  cluster: string;
  stage: number;
  price: number;
  slots: SlotPayload[];
  choices: ChoicePayload[];
  guidelines: Record<string, string>;
}

export interface NextHitResponse {
  hit: HitPayload | null;
  suspended_clusters: string[];
}

export interface SubmitResponse {
  hit_id: string;
  status: string;
  suspended: boolean;
}

export interface QualificationQuestion extends SlotPayload {
  choices: string[];
}

export interface QualificationPayload {
  cluster: string;
  definitions: Record<string, string>;
  guidelines: Record<string, string>;
  questions: QualificationQuestion[];
}

export interface QualificationResult {
  cluster: string;
  result: "passed" | "failed";
}

export interface SessionResponse {
  token: string;
  annotator_id: string;
}

export interface MeResponse {
  annotator_id: string;
  clusters: Record<string, { qualification: string; status: string }>;
}

// -- admin --------------------------------------------------------------

export interface ClusterProgress {
  sentences: number;
  resolved: number;
  wrong_type_exhausted: number;
  unresolvable: number;
  pending: number;
}

export interface ProgressResponse {
  sentences: number;
  resolved: number;
  wrong_type_exhausted: number;
  unresolvable: number;
  pending: number;
  hits_issued: number;
  hits_open: number;
  cost_units: number;
  suspensions: number;
  round_distribution: Record<string, number>;
  per_cluster: Record<string, ClusterProgress>;
}

export interface AgreementResponse {
  kappa: number | null;
  agreement: number | null;
  items: number;
  reason?: string;
}

export interface SuspensionRow {
  annotator_id: string;
  cluster: string;
  correct: number;
  seen: number;
}

export interface SuspensionsResponse {
  suspensions: SuspensionRow[];
}

export interface CostResponse {
  hits_issued: number;
  price_per_hit: number;
  cost_units: number;
}

export interface DifficultyRow {
  sentence_id: string;
  disagreement: number;
}

export interface DifficultyResponse {
  items: DifficultyRow[];
}

export interface PlanResponse {
  clusters: number;
  type_pairs: number;
  cost: {
    naive_worst_case_tasks: number;
    clustered_worst_case_tasks: number;
    reduction_factor: number;
    per_cluster_stage_counts: Record<string, number>;
  };
}

export interface StateResponse {
  digest: string | null;
  last_seq: number;
}

/** The special choice meaning the pre-assigned entity types are wrong. */
export const WRONG_TYPE = "WRONG_TYPE";

/** The explicit negative choice. */
export const NO_RELATION = "NO_RELATION";
