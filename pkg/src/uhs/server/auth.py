"""Accounts and bearer tokens for the health server.

Passwords are stored salted and PBKDF2-hashed; tokens are opaque
128-bit strings with an expiry. Login failures take the same code path
(including the hash computation) whether the username exists or not.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets
import time
from dataclasses import dataclass

from ..errors import BadCredentials, InvalidConfig, Unauthorized

ROLE_DOCTOR = "doctor"
ROLE_PATIENT = "patient"

_PBKDF2_ITERATIONS = 30_000


def _hash_password(password: str, salt: bytes) -> bytes:
    return hashlib.pbkdf2_hmac("sha256", password.encode(), salt, _PBKDF2_ITERATIONS)


@dataclass
class User:
    username: str
    salt_hex: str
    password_hash_hex: str
    role: str
    patient_id: str | None = None

    def to_json(self) -> dict:
        return {"username": self.username, "salt": self.salt_hex,
                "password_hash": self.password_hash_hex, "role": self.role,
                "patient_id": self.patient_id}

    @classmethod
    def from_json(cls, data: dict) -> "User":
        return cls(username=data["username"], salt_hex=data["salt"],
                   password_hash_hex=data["password_hash"], role=data["role"],
                   patient_id=data.get("patient_id"))


@dataclass
class TokenInfo:
    token: str
    username: str
    role: str
    expires_at: float
    patient_id: str | None = None


class AuthManager:
    """User registry plus in-memory token table. Tokens do not survive a
    restart; accounts do (they ride in the snapshot/journal)."""

    def __init__(self, token_ttl_s: float = 3600.0, clock=time.time):
        if token_ttl_s <= 0:
            raise InvalidConfig("token_ttl_s must be positive")
        self.token_ttl_s = token_ttl_s
        self.clock = clock
        self.users: dict[str, User] = {}
        self._tokens: dict[str, TokenInfo] = {}
        self._dummy_salt = bytes(16)

    # -- accounts -----------------------------------------------------------
    @staticmethod
    def build_user(username: str, password: str, role: str,
                   patient_id: str | None = None) -> User:
        """Hash credentials into a User record without registering it;
        registration happens when the journaled mutation is applied."""
        if role not in (ROLE_DOCTOR, ROLE_PATIENT):
            raise InvalidConfig(f"unknown role {role!r}")
        salt = secrets.token_bytes(16)
        return User(username=username, salt_hex=salt.hex(),
                    password_hash_hex=_hash_password(password, salt).hex(),
                    role=role, patient_id=patient_id)

    def restore_user(self, user: User) -> None:
        self.users[user.username] = user

    # -- tokens ---------------------------------------------------------------
    def authenticate(self, username: str, password: str) -> TokenInfo:
        user = self.users.get(username)
        # Unknown users still pay for a hash so timing does not leak
        # which usernames exist.
        salt = bytes.fromhex(user.salt_hex) if user else self._dummy_salt
        expected = bytes.fromhex(user.password_hash_hex) if user else self._dummy_salt
        if not hmac.compare_digest(_hash_password(password, salt), expected) or user is None:
            raise BadCredentials("bad username or password")
        info = TokenInfo(token=secrets.token_hex(16), username=user.username,
                         role=user.role, patient_id=user.patient_id,
                         expires_at=self.clock() + self.token_ttl_s)
        self._tokens[info.token] = info
        return info

    def validate(self, token: str | None, roles: tuple[str, ...] | None = None) -> TokenInfo:
        if not token:
            raise Unauthorized("missing bearer token")
        info = self._tokens.get(token)
        if info is None:
            raise Unauthorized("unknown token")
        if info.expires_at <= self.clock():
            del self._tokens[token]
            raise Unauthorized("token expired")
        if roles is not None and info.role not in roles:
            raise Unauthorized(f"{info.role} role may not call this endpoint")
        return info
