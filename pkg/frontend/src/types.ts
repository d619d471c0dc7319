// Wire types of the health server's /api/v1 JSON API.

export interface GeoLocation {
  lat: number;
  lon: number;
  fix_time: number;
}

export interface ObservationRecord {
  patient_id: string;
  seq: number;
  t: number;
  activity: number; // 1 resting, 2 walking, 3 running, 4 falling
  spo2?: number;
  hr?: number;
  ratio_r?: number;
  quality?: "ok" | "low_confidence";
  location?: GeoLocation | null;
  server_seq: number;
  risk: number;
}

export interface Alert {
  alert_id: string;
  patient_id: string;
  t: number;
  cause: "rule_fall" | "rule_spo2_low" | "rule_hr_out_of_band" | "model_risk";
  risk: number;
  location: GeoLocation | null;
  state: "open" | "acknowledged";
}

export interface ConsultSlot {
  slot_id: string;
  doctor: string;
  patient_id: string;
  start_time: number;
  duration_s: number;
  booked: boolean;
  booked_by: string | null;
}

export interface InfoItem {
  id: string;
  text: string;
}

export interface InfoBundle {
  recommendations: InfoItem[];
  prescriptions: InfoItem[];
  consult_slots: ConsultSlot[];
}

export interface PatientSummary {
  patient_id: string;
  demographics: { name: string; year_of_birth: number | null };
  monitoring_status: string;
  latest_observation: ObservationRecord | null;
  open_alerts: Alert[];
  history_stats: { count: number; t_first: number | null; t_last: number | null };
}

export interface LoginResponse {
  token: string;
  role: "doctor" | "patient";
  patient_id: string | null;
  expires_at: number;
}
