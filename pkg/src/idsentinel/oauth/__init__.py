from .store import (
    AccessToken,
    AuthorizationCode,
    ClientRegistration,
    IdentityStore,
    OAuthError,
    Session,
    User,
)

__all__ = [
    "AccessToken",
    "AuthorizationCode",
    "ClientRegistration",
    "IdentityStore",
    "OAuthError",
    "Session",
    "User",
]
