#!/usr/bin/env python3
"""
Configuration du système de logging pour stabilab
Logs console lisibles, fichiers JSON avec rotation, journal des réplications
"""
import logging
import logging.config
import logging.handlers
import sys
import time
import json
from datetime import datetime, timezone
from pathlib import Path

# Attributs optionnels recopiés dans les enregistrements JSON
EXPERIMENT_FIELDS = ('experiment', 's', 'rep', 'seed', 'n_points', 'statistic', 'operation')


class JSONFormatter(logging.Formatter):
    """Formatter JSON pour les logs structurés"""

    def format(self, record):
        log_entry = {
            'timestamp': datetime.now(timezone.utc).isoformat(),
            'level': record.levelname,
            'logger': record.name,
            'message': record.getMessage(),
            'module': record.module,
            'function': record.funcName,
            'line': record.lineno,
            'process': record.process
        }

        # Contexte d'expérience si disponible
        for field in EXPERIMENT_FIELDS:
            if hasattr(record, field):
                log_entry[field] = getattr(record, field)

        if hasattr(record, 'duration'):
            log_entry['duration_ms'] = record.duration

        if record.exc_info:
            log_entry['exception'] = self.formatException(record.exc_info)

        return json.dumps(log_entry, ensure_ascii=False, default=str)


def build_logging_config(cfg=None) -> dict:
    """Construire le dictionnaire dictConfig selon la configuration"""
    level = getattr(cfg, 'LOG_LEVEL', 'INFO')
    to_file = getattr(cfg, 'LOG_TO_FILE', True)
    log_dir = Path(getattr(cfg, 'LOG_DIR', 'logs'))
    env = getattr(cfg, 'ENV', 'development')

    handlers = {
        'console': {
            'class': 'logging.StreamHandler',
            'level': 'WARNING' if env == 'production' else level,
            'formatter': 'detailed',
            'stream': sys.stderr
        }
    }
    app_handlers = ['console']
    replication_handlers = []

    if to_file:
        log_dir.mkdir(parents=True, exist_ok=True)
        handlers.update({
            'file': {
                'class': 'logging.handlers.RotatingFileHandler',
                'level': 'INFO',
                'formatter': 'json',
                'filename': str(log_dir / 'stabilab.log'),
                'maxBytes': 10485760,  # 10MB
                'backupCount': 10,
                'encoding': 'utf-8'
            },
            'error_file': {
                'class': 'logging.handlers.RotatingFileHandler',
                'level': 'ERROR',
                'formatter': 'json',
                'filename': str(log_dir / 'error.log'),
                'maxBytes': 10485760,
                'backupCount': 20,
                'encoding': 'utf-8'
            },
            'replication_file': {
                'class': 'logging.handlers.RotatingFileHandler',
                'level': 'DEBUG',
                'formatter': 'json',
                'filename': str(log_dir / 'replications.log'),
                'maxBytes': 52428800,  # 50MB
                'backupCount': 5,
                'encoding': 'utf-8'
            }
        })
        app_handlers += ['file', 'error_file']
        replication_handlers.append('replication_file')

    return {
        'version': 1,
        'disable_existing_loggers': False,
        'formatters': {
            'detailed': {
                'format': '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
            },
            'json': {
                '()': JSONFormatter,
            }
        },
        'handlers': handlers,
        'loggers': {
            'stabilab': {
                'level': level,
                'handlers': app_handlers,
                'propagate': False
            },
            'replication': {
                'level': 'DEBUG' if replication_handlers else 'WARNING',
                'handlers': replication_handlers,
                'propagate': False
            }
        },
        'root': {
            'level': level,
            'handlers': app_handlers
        }
    }


def setup_logging(cfg=None):
    """Configurer le système de logging complet"""
    if cfg is None:
        from config import get_config
        cfg = get_config()

    logging.config.dictConfig(build_logging_config(cfg))
    return logging.getLogger('stabilab')


def log_replication(s: float, rep: int, seed: int, n_points: int, duration: float = None,
                    experiment: str = None):
    """Logger une tâche de réplication terminée"""
    logger = logging.getLogger('replication')
    logger.debug(
        f'réplication s={s:g} rep={rep} ({n_points} points)',
        extra={
            's': s,
            'rep': rep,
            'seed': seed,
            'n_points': n_points,
            'experiment': experiment,
            'duration': None if duration is None else duration * 1000
        }
    )


class PerformanceLogger:
    """Context manager pour mesurer et logger la durée d'une phase"""

    def __init__(self, operation: str, logger_name: str = 'stabilab'):
        self.operation = operation
        self.logger = logging.getLogger(logger_name)
        self.start_time = None
        self.duration = None

    def __enter__(self):
        self.start_time = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.duration = time.perf_counter() - self.start_time
        extra = {'operation': self.operation, 'duration': self.duration * 1000}

        if exc_type is not None:
            self.logger.error(f'{self.operation} échoué après {self.duration:.3f}s: {exc_val}',
                              extra=extra)
        else:
            self.logger.info(f'{self.operation} terminé en {self.duration:.3f}s', extra=extra)

        return False


def setup_test_logging():
    """Configuration de logging pour les tests"""
    logging.basicConfig(
        level=logging.DEBUG,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[logging.StreamHandler(sys.stderr)],
        force=True
    )
