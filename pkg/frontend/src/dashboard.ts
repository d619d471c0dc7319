// Clinician dashboard session: login, patient selection, live vitals
// view (1 s polling), alert acknowledgment, info uploads.
//
// Everything renders into one root element; all state changes go
// through the documented /api/v1 endpoints. A 401 at any point drops
// back to the login page, keeping any unsent info draft.

import { ApiClient, ApiError } from "./api.js";
import { LiveBuffer } from "./buffer.js";
import { ACTIVITY_NAMES, renderChart } from "./chart.js";
import type { Alert, PatientSummary } from "./types.js";

export interface DashboardOptions {
  pollIntervalMs: number;
  windowS: number;
  autoPoll: boolean;
}

interface InfoDraft {
  kind: string;
  text: string;
  startTime: string;
  durationS: string;
}

const EMPTY_DRAFT: InfoDraft = { kind: "recommendation", text: "", startTime: "", durationS: "" };

export class Dashboard {
  readonly options: DashboardOptions;
  readonly buffer: LiveBuffer;
  selectedPatient: string | null = null;
  patients: PatientSummary[] = [];
  alerts: Alert[] = [];
  draft: InfoDraft = { ...EMPTY_DRAFT };
  statusLine = "";
  loginError = "";
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private root: HTMLElement,
    readonly api: ApiClient,
    options: Partial<DashboardOptions> = {},
  ) {
    this.options = { pollIntervalMs: 1000, windowS: 300, autoPoll: true, ...options };
    this.buffer = new LiveBuffer(this.options.windowS);
  }

  // -- session -----------------------------------------------------------

  start(): void {
    this.renderLogin();
  }

  async login(username: string, password: string): Promise<void> {
    try {
      const info = await this.api.login(username, password);
      if (info.role !== "doctor") {
        this.api.token = null;
        this.loginError = "this console is for the doctor role";
        this.renderLogin();
        return;
      }
    } catch (err) {
      this.loginError = err instanceof ApiError ? err.message : String(err);
      this.renderLogin();
      return;
    }
    this.loginError = "";
    await this.refreshPatients();
    this.renderMain();
    if (this.options.autoPoll) this.startPolling();
  }

  startPolling(): void {
    this.stopPolling();
    this.timer = setInterval(() => {
      void this.pollOnce();
    }, this.options.pollIntervalMs);
  }

  stopPolling(): void {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }

  private handleExpiry(err: unknown): boolean {
    if (err instanceof ApiError && err.status === 401) {
      // session expired: back to login, draft kept for after re-auth
      this.stopPolling();
      this.api.token = null;
      this.loginError = "session expired, log in again";
      this.renderLogin();
      return true;
    }
    return false;
  }

  // -- data ---------------------------------------------------------------

  async refreshPatients(): Promise<void> {
    this.patients = await this.api.listPatients();
    if (this.selectedPatient === null && this.patients.length > 0) {
      this.selectedPatient = this.patients[0].patient_id;
    }
  }

  async selectPatient(patientId: string): Promise<void> {
    this.selectedPatient = patientId;
    this.buffer.clear();
    await this.pollOnce();
  }

  /** One polling step: pull the trailing window and the alert log. */
  async pollOnce(): Promise<void> {
    if (this.selectedPatient === null) return;
    try {
      const latest = this.buffer.latestT;
      const from = latest === null ? undefined : latest - this.options.windowS;
      const records = await this.api.observations(this.selectedPatient, from);
      this.buffer.merge(records);
      this.alerts = await this.api.alerts();
    } catch (err) {
      if (this.handleExpiry(err)) return;
      throw err;
    }
    this.renderMain();
  }

  async ackAlert(alertId: string): Promise<void> {
    try {
      await this.api.ackAlert(alertId);
      this.statusLine = `alert ${alertId} acknowledged`;
    } catch (err) {
      if (err instanceof ApiError && err.code === "AlreadyAcknowledged") {
        this.statusLine = `alert ${alertId} was already acknowledged`;
      } else if (!this.handleExpiry(err)) {
        throw err;
      } else {
        return;
      }
    }
    this.alerts = await this.api.alerts();
    this.renderMain();
  }

  async submitInfo(): Promise<void> {
    if (this.selectedPatient === null) return;
    this.readDraftFromForm();
    const body: Record<string, unknown> =
      this.draft.kind === "consult_slot"
        ? {
            kind: "consult_slot",
            start_time: Number(this.draft.startTime),
            duration_s: Number(this.draft.durationS),
          }
        : { kind: this.draft.kind, text: this.draft.text };
    try {
      const created = await this.api.uploadInfo(this.selectedPatient, body);
      this.statusLine = `${this.draft.kind} ${created.id} uploaded`;
      this.draft = { ...EMPTY_DRAFT, kind: this.draft.kind };
    } catch (err) {
      if (this.handleExpiry(err)) return;
      if (err instanceof ApiError) {
        this.statusLine = `error: ${err.code}: ${err.message}`;
      } else {
        throw err;
      }
    }
    this.renderMain();
  }

  // -- rendering ------------------------------------------------------------

  private el<K extends keyof HTMLElementTagNameMap>(tag: K): HTMLElementTagNameMap[K] {
    return this.root.ownerDocument.createElement(tag);
  }

  renderLogin(): void {
    this.root.innerHTML = `
      <div class="login-page">
        <h1>Clinic monitor</h1>
        <form id="login-form">
          <label>Username <input name="username" id="login-username"></label>
          <label>Password <input name="password" id="login-password" type="password"></label>
          <button type="submit">Log in</button>
        </form>
        <p class="login-error">${this.loginError}</p>
      </div>`;
    const form = this.root.querySelector("#login-form") as HTMLFormElement;
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      const username = (this.root.querySelector("#login-username") as HTMLInputElement).value;
      const password = (this.root.querySelector("#login-password") as HTMLInputElement).value;
      void this.login(username, password);
    });
  }

  renderMain(): void {
    const records = this.buffer.items();
    const patientList = this.patients
      .map((p) => {
        const selected = p.patient_id === this.selectedPatient ? " selected" : "";
        const open = p.open_alerts.length > 0 ? ` (${p.open_alerts.length}!)` : "";
        return (
          `<li class="patient-item${selected}" data-patient="${p.patient_id}">` +
          `${p.patient_id} ${p.demographics.name}${open}</li>`
        );
      })
      .join("");

    const latest = records[records.length - 1];
    const latestLine = latest
      ? `latest: activity ${ACTIVITY_NAMES[latest.activity] ?? latest.activity}` +
        (latest.spo2 !== undefined && latest.spo2 !== null
          ? `, SpO2 ${latest.spo2}%, HR ${latest.hr} bpm` +
            (latest.quality === "low_confidence" ? " (low confidence)" : "")
          : ", no vitals")
      : "";

    const chart = records.length
      ? renderChart(records)
      : `<p class="empty-state">No observations yet for this patient.</p>`;

    const shownAlerts = this.alerts
      .filter((a) => a.patient_id === this.selectedPatient)
      .sort((a, b) => (a.state === b.state ? b.t - a.t : a.state === "open" ? -1 : 1));
    const alertItems = shownAlerts
      .map((a) => {
        const location =
          a.cause === "rule_fall" && a.location
            ? ` <span class="alert-location">at (${a.location.lat}, ${a.location.lon})</span>`
            : "";
        const button =
          a.state === "open"
            ? ` <button class="ack-btn" data-alert="${a.alert_id}">ack</button>`
            : "";
        return (
          `<li class="alert-item alert-${a.state}" data-alert="${a.alert_id}">` +
          `[${a.state}] ${a.cause} t=${a.t} risk=${a.risk}${location}${button}</li>`
        );
      })
      .join("");

    this.root.innerHTML = `
      <div class="main-page">
        <header><h1>Clinic monitor</h1><span class="status-line">${this.statusLine}</span></header>
        <aside><ul class="patient-list">${patientList}</ul></aside>
        <section class="live-view">
          <h2>${this.selectedPatient ?? ""}</h2>
          <p class="obs-count">${records.length} observations in window</p>
          <p class="latest-line">${latestLine}</p>
          <div class="chart">${chart}</div>
        </section>
        <section class="alerts">
          <h2>Alerts</h2>
          <ul class="alert-list">${alertItems}</ul>
        </section>
        <section class="info-upload">
          <h2>Send to patient</h2>
          <form id="info-form">
            <select id="info-kind">
              <option value="recommendation">recommendation</option>
              <option value="prescription">prescription</option>
              <option value="consult_slot">consult slot</option>
            </select>
            <input id="info-text" placeholder="text" value="">
            <input id="info-start" placeholder="slot start (s)" value="">
            <input id="info-duration" placeholder="slot duration (s)" value="">
            <button type="submit">Upload</button>
          </form>
        </section>
      </div>`;

    (this.root.querySelector("#info-kind") as HTMLSelectElement).value = this.draft.kind;
    (this.root.querySelector("#info-text") as HTMLInputElement).value = this.draft.text;
    (this.root.querySelector("#info-start") as HTMLInputElement).value = this.draft.startTime;
    (this.root.querySelector("#info-duration") as HTMLInputElement).value =
      this.draft.durationS;

    for (const item of this.root.querySelectorAll(".patient-item")) {
      item.addEventListener("click", () => {
        void this.selectPatient((item as HTMLElement).dataset["patient"] as string);
      });
    }
    for (const button of this.root.querySelectorAll(".ack-btn")) {
      button.addEventListener("click", () => {
        void this.ackAlert((button as HTMLElement).dataset["alert"] as string);
      });
    }
    const form = this.root.querySelector("#info-form") as HTMLFormElement;
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.submitInfo();
    });
  }

  private readDraftFromForm(): void {
    const kind = this.root.querySelector("#info-kind") as HTMLSelectElement | null;
    if (!kind) return;
    this.draft = {
      kind: kind.value,
      text: (this.root.querySelector("#info-text") as HTMLInputElement).value,
      startTime: (this.root.querySelector("#info-start") as HTMLInputElement).value,
      durationS: (this.root.querySelector("#info-duration") as HTMLInputElement).value,
    };
  }
}
