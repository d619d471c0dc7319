// Thin fetch client for the health server. Server errors arrive as
// {"error": "<name>", "message": "..."} and surface as ApiError so the
// UI can branch on the code (Unauthorized, OverlappingSlot, ...).

import type {
  Alert,
  InfoBundle,
  LoginResponse,
  ObservationRecord,
  PatientSummary,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public code: string,
    message: string,
    public status: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export class ApiClient {
  token: string | null = null;

  constructor(private baseUrl: string = "") {}

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
    params?: Record<string, string | number>,
  ): Promise<T> {
    let url = this.baseUrl + path;
    if (params && Object.keys(params).length > 0) {
      const qs = new URLSearchParams();
      for (const [key, value] of Object.entries(params)) qs.set(key, String(value));
      url += "?" + qs.toString();
    }
    const headers: Record<string, string> = {};
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    if (body !== undefined) headers["Content-Type"] = "application/json";
    const resp = await fetch(url, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      throw new ApiError(
        (payload as { error?: string }).error ?? "UhsError",
        (payload as { message?: string }).message ?? resp.statusText,
        resp.status,
      );
    }
    return payload as T;
  }

  async login(username: string, password: string): Promise<LoginResponse> {
    const info = await this.request<LoginResponse>("POST", "/api/v1/auth/login", {
      username,
      password,
    });
    this.token = info.token;
    return info;
  }

  addPatient(registration: Record<string, unknown>): Promise<{ patient_id: string }> {
    return this.request("POST", "/api/v1/patients", registration);
  }

  async listPatients(): Promise<PatientSummary[]> {
    const out = await this.request<{ patients: PatientSummary[] }>(
      "GET",
      "/api/v1/patients",
    );
    return out.patients;
  }

  viewPatient(patientId: string): Promise<PatientSummary> {
    return this.request("GET", `/api/v1/patients/${patientId}`);
  }

  async observations(
    patientId: string,
    from?: number,
    to?: number,
  ): Promise<ObservationRecord[]> {
    const params: Record<string, number> = {};
    if (from !== undefined) params["from"] = from;
    if (to !== undefined) params["to"] = to;
    const out = await this.request<{ observations: ObservationRecord[] }>(
      "GET",
      `/api/v1/patients/${patientId}/observations`,
      undefined,
      params,
    );
    return out.observations;
  }

  enterData(payload: Record<string, unknown>): Promise<{ server_seq: number }> {
    return this.request("POST", "/api/v1/observations", payload);
  }

  getInfo(patientId: string): Promise<InfoBundle> {
    return this.request("GET", `/api/v1/patients/${patientId}/info`);
  }

  uploadInfo(patientId: string, info: Record<string, unknown>): Promise<{ id: string }> {
    return this.request("POST", `/api/v1/patients/${patientId}/info`, info);
  }

  bookAppointment(slotId: string, patientId?: string): Promise<unknown> {
    const body: Record<string, unknown> = { slot_id: slotId };
    if (patientId !== undefined) body["patient_id"] = patientId;
    return this.request("POST", "/api/v1/appointments", body);
  }

  async alerts(state?: "open" | "acknowledged"): Promise<Alert[]> {
    const params = state ? { state } : undefined;
    const out = await this.request<{ alerts: Alert[] }>(
      "GET",
      "/api/v1/alerts",
      undefined,
      params,
    );
    return out.alerts;
  }

  ackAlert(alertId: string): Promise<Alert> {
    return this.request("POST", `/api/v1/alerts/${alertId}/ack`, {});
  }

  createAlert(body: Record<string, unknown>): Promise<Alert> {
    return this.request("POST", "/api/v1/alerts", body);
  }

  streamAlerts(
    since: number,
    timeoutS: number,
  ): Promise<{ alerts: Alert[]; next_since: number }> {
    return this.request("GET", "/api/v1/stream/alerts", undefined, {
      since,
      timeout_s: timeoutS,
    });
  }
}
