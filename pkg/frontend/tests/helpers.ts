// Test harness: boots the real Python health server as a subprocess and
// seeds it through the public API, so every dashboard test runs against
// the actual backend.

import { execFile, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import net from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { promisify } from "node:util";

import { ApiClient } from "../src/api.js";

const execFileAsync = promisify(execFile);

export const DOCTOR = { username: "doc", password: "doctorpw" };

export interface ServerHandle {
  baseUrl: string;
  proc: ChildProcess;
  stop(): Promise<void>;
}

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const probe = net.createServer();
    probe.once("error", reject);
    probe.listen(0, "127.0.0.1", () => {
      const port = (probe.address() as net.AddressInfo).port;
      probe.close(() => resolve(port));
    });
  });
}

export async function startServer(): Promise<ServerHandle> {
  const port = await freePort();
  const dir = mkdtempSync(join(tmpdir(), "uhs-dash-"));
  const configPath = join(dir, "server.yaml");
  // the server reads YAML; JSON is a YAML subset
  writeFileSync(
    configPath,
    JSON.stringify({
      listen_host: "127.0.0.1",
      listen_port: port,
      data_dir: join(dir, "data"),
      users: [{ ...DOCTOR, role: "doctor" }],
    }),
  );
  const proc = spawn("python3", ["-m", "uhs.cli", "serve", "--config", configPath], {
    stdio: ["ignore", "ignore", "pipe"],
  });
  let stderr = "";
  proc.stderr?.on("data", (chunk) => (stderr += chunk));
  const baseUrl = `http://127.0.0.1:${port}`;
  // under happy-dom, move the window onto the server origin (production
  // serves the dashboard same-origin at /ui/) so fetch skips CORS
  (globalThis as { happyDOM?: { setURL(url: string): void } }).happyDOM?.setURL(
    baseUrl + "/ui/",
  );
  const deadline = Date.now() + 15_000;
  for (;;) {
    try {
      const resp = await fetch(`${baseUrl}/api/v1/health`);
      if (resp.ok) break;
    } catch {
      /* not up yet */
    }
    if (proc.exitCode !== null) {
      throw new Error(`server exited early (${proc.exitCode}): ${stderr}`);
    }
    if (Date.now() > deadline) throw new Error(`server never came up: ${stderr}`);
    await new Promise((r) => setTimeout(r, 100));
  }
  return {
    baseUrl,
    proc,
    stop: () =>
      new Promise<void>((resolve) => {
        proc.once("exit", () => resolve());
        proc.kill("SIGTERM");
      }),
  };
}

/** Register a patient and push a small history: resting with vitals, a
 * low-confidence reading, then a fall (which opens an alert). */
export async function seedPatient(baseUrl: string, patientId = "p1"): Promise<void> {
  const doctor = new ApiClient(baseUrl);
  await doctor.login(DOCTOR.username, DOCTOR.password);
  await doctor.addPatient({
    patient_id: patientId,
    username: patientId,
    password: `pw-${patientId}`,
    name: "Ada",
  });
  const patient = new ApiClient(baseUrl);
  await patient.login(patientId, `pw-${patientId}`);
  const uploads = [
    { seq: 0, t: 10.0, activity: 1, spo2: 96, hr: 72, ratio_r: 0.56, quality: "ok" },
    { seq: 1, t: 12.0, activity: 2, spo2: 95, hr: 84, ratio_r: 0.6, quality: "ok" },
    { seq: 2, t: 14.0, activity: 2, spo2: 97, hr: 88, ratio_r: 0.0, quality: "low_confidence" },
    {
      seq: 3,
      t: 16.0,
      activity: 4,
      location: { lat: -25.75, lon: 28.19, fix_time: 16.0 },
    },
  ];
  for (const upload of uploads) {
    await patient.enterData({ patient_id: patientId, ...upload });
  }
}

/** Run the Python gateway's info sync against the live server; this is
 * literally the base node code path the dashboard feeds into. */
export async function baseNodeSyncInfo(
  baseUrl: string,
  patientId = "p1",
): Promise<{ consult_slots: Array<{ slot_id: string }> }> {
  const code = [
    "import json, sys",
    "from uhs.base_node import BaseNode, HttpServerClient",
    "node = BaseNode(sys.argv[2], HttpServerClient(sys.argv[1]))",
    "node.login(sys.argv[2], 'pw-' + sys.argv[2])",
    "print(json.dumps(node.sync_info()))",
  ].join("\n");
  const { stdout } = await execFileAsync("python3", ["-c", code, baseUrl, patientId]);
  return JSON.parse(stdout);
}
