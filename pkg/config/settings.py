import os
from dataclasses import dataclass
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()


@dataclass(frozen=True)
class Settings:
    """Environment-backed defaults (a ``.env`` file in the working directory is honoured)."""
    data_dir: Path | None
    log_dir: str | None
    log_level: str

    @classmethod
    def from_env(cls) -> "Settings":
        data_dir = os.getenv("HGT_DATA_DIR")
        return cls(
            data_dir=Path(data_dir) if data_dir else None,
            log_dir=os.getenv("HGT_LOG_DIR"),
            log_level=os.getenv("HGT_LOG_LEVEL", "INFO"),
        )

    def resolve_graph_dir(self, graph: str | None) -> Path | None:
        """Relative graph paths resolve against HGT_DATA_DIR when it is set."""
        if graph is None:
            return self.data_dir
        path = Path(graph)
        if not path.is_absolute() and self.data_dir is not None and not path.exists():
            return self.data_dir / path
        return path
