from backend.api.errors import PBTAPIError, PBTServiceError
from backend.api.service import PBTService

__all__ = ["PBTAPIError", "PBTService", "PBTServiceError"]
