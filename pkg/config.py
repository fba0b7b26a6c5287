import os
from dotenv import load_dotenv

load_dotenv()

TOOL_VERSION = "1.0.0"


class Config:
    """Base configuration"""
    LOG_LEVEL = os.environ.get('LBSAUDIT_LOG_LEVEL', 'WARNING')
    NO_COLOR = bool(os.environ.get('NO_COLOR'))
    PROFILE = 'default'

    # crypto backends
    SHE_BACKEND = 'transparent'
    DGK_BACKEND = 'transparent'
    SHE_MAX_DEPTH = 2
    SHE_SECURITY_LEVEL = 'toy'
    BFV_RELIN_BASE_BITS = 16
    DGK_MODULUS_BITS = 512
    DGK_V_BITS = 40

    # attacks
    FACTOR_TRIAL_LIMIT = 10**6
    FILTER_NODE_BUDGET = 10**6
    FLAW_WORKERS = 1
    MAX_COUNTEREXAMPLES = 10

    # "full" records serialized ciphertexts in transcript messages, "digest" a 16-hex sha256 prefix
    TRANSCRIPT_CIPHERTEXTS = os.environ.get('LBSAUDIT_TRANSCRIPT_CIPHERTEXTS', 'full')

    # flaw demo default setting (l = 20, k_sec = 40)
    FLAW_DEFAULT_M = 2**20 - 1
    FLAW_DEFAULT_K_SEC = 40


class DevelopmentConfig(Config):
    """Development configuration"""
    PROFILE = 'development'
    LOG_LEVEL = os.environ.get('LBSAUDIT_LOG_LEVEL', 'INFO')


class ProductionConfig(Config):
    """Full-size crypto backends"""
    PROFILE = 'production'
    SHE_BACKEND = 'bfv'
    DGK_BACKEND = 'dgk'
    SHE_SECURITY_LEVEL = 'small'


class TestingConfig(Config):
    """Testing configuration"""
    PROFILE = 'testing'
    DGK_MODULUS_BITS = 256
    DGK_V_BITS = 32


config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': Config
}


def get_config(profile=None):
    """Resolve a profile name to its config class"""
    from errors import ValidationError

    name = profile or 'default'
    if name not in config:
        raise ValidationError("profile", f"unknown profile '{name}' (choose from {', '.join(sorted(config))})")
    return config[name]
