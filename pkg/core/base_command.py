import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, List

from pydantic import BaseModel

from core.errors import NumericalError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


class CommandResponse(BaseModel):
    """Standard response format for all commands"""
    success: bool
    message: str
    data: Dict[str, Any] = {}
    errors: List[str] = []
    exit_code: int = EXIT_OK


class BaseCommand(ABC):
    """Base class for all CLI commands"""

    def __init__(self, name: str, role: str):
        self.name = name
        self.role = role
        self.outputs: List[Path] = []

    @abstractmethod
    def execute(self, request) -> CommandResponse:
        """Run the command; may raise, run() turns errors into responses"""
        pass

    def run(self, request) -> CommandResponse:
        """Execute the command and map failures to exit codes.

        Args:
            request: RunConfig of the invocation

        Returns:
            CommandResponse; never raises for domain or numerical failures
        """
        self.outputs = []
        try:
            return self.execute(request)
        except NumericalError as e:
            logger.error(f"{self.name} failed numerically: {e}")
            return CommandResponse(
                success=False,
                message=f"Numerical failure in {self.name}",
                errors=[str(e)],
                exit_code=EXIT_NUMERICAL,
            )
        except (ValueError, OSError) as e:
            # DomainError and pydantic ValidationError are both ValueErrors
            logger.error(f"{self.name} rejected its input: {e}")
            return CommandResponse(
                success=False,
                message=f"Invalid input for {self.name}",
                errors=[str(e)],
                exit_code=EXIT_VALIDATION,
            )

    def record_output(self, path: Path) -> Path:
        """Remember a file written by this command"""
        self.outputs.append(Path(path))
        return Path(path)

    def get_status(self) -> Dict[str, Any]:
        """Get the current status of the command"""
        return {
            "name": self.name,
            "role": self.role,
            "outputs": [str(p) for p in self.outputs],
        }
