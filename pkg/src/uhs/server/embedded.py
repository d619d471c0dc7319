"""In-process client with the same surface as HttpServerClient.

Used by embedded scenario runs and tests: calls go straight into the
core (no sockets), and enter_data can carry the caller's virtual
receive time so alert timestamps live on the simulation clock.
"""

from __future__ import annotations

from .core import HealthServer


class InProcessClient:
    def __init__(self, server: HealthServer):
        self.server = server
        self.received_t: float | None = None

    def login(self, username: str, password: str) -> dict:
        return self.server.login(username, password)

    def add_patient(self, token: str, registration: dict) -> dict:
        return self.server.add_patient(token, registration)

    def list_patients(self, token: str) -> list:
        return self.server.list_patients(token)

    def view_patient(self, token: str, patient_id: str) -> dict:
        return self.server.view_patient(token, patient_id)

    def enter_data(self, token: str, payload: dict) -> dict:
        return self.server.enter_data(token, payload, received_t=self.received_t)

    def get_observations(self, token: str, patient_id: str,
                         t_from: float | None = None, t_to: float | None = None) -> list:
        return self.server.collect_data(token, patient_id, t_from, t_to)

    def get_info(self, token: str, patient_id: str) -> dict:
        return self.server.get_info(token, patient_id)

    def upload_info(self, token: str, patient_id: str, info: dict) -> dict:
        return self.server.upload_info(token, patient_id, info)

    def book_appointment(self, token: str, slot_id: str,
                         patient_id: str | None = None) -> dict:
        return self.server.book_appointment(token, slot_id, patient_id)

    def get_alerts(self, token: str, state: str | None = None) -> list:
        return self.server.get_alerts(token, state)

    def ack_alert(self, token: str, alert_id: str) -> dict:
        return self.server.ack_alert(token, alert_id)

    def create_alert(self, token: str, body: dict) -> dict:
        return self.server.create_alert(token, body)

    def stream_alerts(self, token: str, since: int = 0, timeout_s: float = 10.0) -> dict:
        return self.server.wait_alerts(token, since, timeout_s)
