import logging
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional


class CustomLogger:
    """Timestamped log file plus console output for one CLI invocation.

    Handlers are attached to the root logger so the named loggers of every
    component (`hash_grid`, `trainer`, ...) end up in the same file.
    """

    def __init__(self,
                 name: str,
                 log_dir: str = "logs",
                 config: Optional[dict] = None):
        self.log_dir = Path(log_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)

        self.config = {
            'log_level': logging.INFO,
            'format': '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
            'date_format': '%Y-%m-%d %H:%M:%S',
            'file_name_format': '%Y%m%d_%H%M%S',
            'add_process_info': True
        }
        if config:
            self.config.update({k: v for k, v in config.items() if k != 'log_dir'})

        timestamp = datetime.now(timezone.utc).strftime(self.config['file_name_format'])
        self.log_file = self.log_dir / f"{name}_{timestamp}.log"

        self.logger = logging.getLogger(name)
        self._setup_handlers()
        self._log_initial_info()

    def _setup_handlers(self):
        formatter = logging.Formatter(self.config['format'], datefmt=self.config['date_format'])

        file_handler = logging.FileHandler(self.log_file, encoding='utf-8')
        file_handler.setFormatter(formatter)
        console_handler = logging.StreamHandler()
        console_handler.setFormatter(formatter)

        root = logging.getLogger()
        for handler in list(root.handlers):
            if getattr(handler, '_adaptive_hash', False):
                root.removeHandler(handler)
                handler.close()
        for handler in (file_handler, console_handler):
            handler.setLevel(self.config['log_level'])
            handler._adaptive_hash = True
            root.addHandler(handler)
        root.setLevel(self.config['log_level'])

    def _log_initial_info(self):
        self.logger.info(f"Logger initialized: {self.log_file}")
        if self.config['add_process_info']:
            self.logger.info(f"Process ID: {os.getpid()}")
            self.logger.info(f"Working Directory: {os.getcwd()}")

    def get_logger(self) -> logging.Logger:
        return self.logger

    def get_recent_logs(self, n: int = 100) -> List[str]:
        """Last n lines of the current log file"""
        try:
            for handler in logging.getLogger().handlers:
                handler.flush()
            with open(self.log_file, 'r', encoding='utf-8') as f:
                return f.readlines()[-n:]
        except Exception as e:
            self.logger.error(f"Log read error: {str(e)}")
            return []
