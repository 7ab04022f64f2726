"""
Configuration du laboratoire stabilab
"""
import os
from dotenv import load_dotenv

# Charger les variables d'environnement
load_dotenv()

CODE_VERSION = '1.0.0'


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw == '':
        return default
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{name} doit être un entier (reçu: {raw!r})")


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or raw == '':
        return default
    try:
        return float(raw)
    except ValueError:
        raise ValueError(f"{name} doit être un réel (reçu: {raw!r})")


class Config:
    """Configuration de base"""
    BASE_DIR = os.path.dirname(os.path.abspath(__file__))

    # Logs et résultats
    LOG_LEVEL = 'INFO'
    LOG_DIR = 'logs'
    RESULTS_DIR = 'results'
    LOG_TO_FILE = True

    # Exécution
    PARALLELISM = 1
    MASTER_SEED = 20240601

    # Tolérances numériques
    GEOMETRY_TOLERANCE = 1e-12
    CIRCUMSPHERE_RTOL = 1e-9
    PSD_TOLERANCE = 1e-10
    QUADRATURE_RTOL = 1e-8

    # Distance de Kolmogorov
    DK_GRID = 64
    DK_GAUSSIAN_FACTOR = 10

    # Estimateur asymptotique (demi-largeur en portées d'interaction)
    STATIONARY_WINDOW_RANGES = 6.0

    # Ajustement des taux
    RATE_TOLERANCE = 0.05
    NOISE_GUARD_FACTOR = 2.0

    # Énumération globale des points critiques (r infini)
    CRITICAL_POINT_CAPS = {1: 2000, 2: 300, 3: 80}
    CRITICAL_POINT_DEFAULT_CAP = 40

    MAX_PATTERN_SIZE = 5


class DevelopmentConfig(Config):
    """Configuration de développement"""
    DEBUG = True
    TESTING = False
    LOG_LEVEL = 'DEBUG'


class ProductionConfig(Config):
    """Configuration pour les longues campagnes de simulation"""
    DEBUG = False
    TESTING = False
    LOG_LEVEL = 'INFO'
    PARALLELISM = os.cpu_count() or 1


class TestingConfig(Config):
    """Configuration de test"""
    DEBUG = True
    TESTING = True
    LOG_LEVEL = 'DEBUG'
    LOG_TO_FILE = False
    RESULTS_DIR = 'test_results'
    PARALLELISM = 1


# Configuration selon l'environnement
config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': DevelopmentConfig
}


def get_config():
    """Retourne la configuration selon l'environnement (STABILAB_ENV)"""
    env = os.getenv('STABILAB_ENV', 'development')
    config_class = config.get(env, config['default'])

    # Créer une instance pour permettre la modification
    instance = config_class()
    instance.ENV = env if env in config else 'development'

    instance.LOG_LEVEL = os.getenv('LOG_LEVEL', instance.LOG_LEVEL).upper()
    instance.LOG_DIR = os.getenv('LOG_DIR', instance.LOG_DIR)
    instance.RESULTS_DIR = os.getenv('RESULTS_DIR', instance.RESULTS_DIR)
    instance.LOG_TO_FILE = os.getenv('LOG_TO_FILE', str(instance.LOG_TO_FILE)).lower() == 'true'

    instance.PARALLELISM = _env_int('PARALLELISM', instance.PARALLELISM)
    instance.MASTER_SEED = _env_int('MASTER_SEED', instance.MASTER_SEED)
    if instance.PARALLELISM < 1:
        raise ValueError("PARALLELISM doit être au moins 1")

    instance.GEOMETRY_TOLERANCE = _env_float('GEOMETRY_TOLERANCE', instance.GEOMETRY_TOLERANCE)
    instance.CIRCUMSPHERE_RTOL = _env_float('CIRCUMSPHERE_RTOL', instance.CIRCUMSPHERE_RTOL)
    instance.PSD_TOLERANCE = _env_float('PSD_TOLERANCE', instance.PSD_TOLERANCE)
    instance.QUADRATURE_RTOL = _env_float('QUADRATURE_RTOL', instance.QUADRATURE_RTOL)

    instance.DK_GRID = _env_int('DK_GRID', instance.DK_GRID)
    instance.DK_GAUSSIAN_FACTOR = _env_int('DK_GAUSSIAN_FACTOR', instance.DK_GAUSSIAN_FACTOR)
    instance.STATIONARY_WINDOW_RANGES = _env_float('STATIONARY_WINDOW_RANGES',
                                                   instance.STATIONARY_WINDOW_RANGES)
    instance.RATE_TOLERANCE = _env_float('RATE_TOLERANCE', instance.RATE_TOLERANCE)
    instance.NOISE_GUARD_FACTOR = _env_float('NOISE_GUARD_FACTOR', instance.NOISE_GUARD_FACTOR)

    instance.CRITICAL_POINT_CAPS = dict(Config.CRITICAL_POINT_CAPS)
    instance.CODE_VERSION = CODE_VERSION

    return instance


def critical_point_cap(cfg, k: int) -> int:
    """Taille maximale de configuration pour l'énumération globale d'indice k"""
    return cfg.CRITICAL_POINT_CAPS.get(k, cfg.CRITICAL_POINT_DEFAULT_CAP)
