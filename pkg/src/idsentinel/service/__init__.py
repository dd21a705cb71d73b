from .api import SituationalApi
from .store import EventStore

__all__ = ["EventStore", "SituationalApi"]
