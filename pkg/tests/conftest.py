"""共享测试夹具"""
import numpy as np
import pytest
from loguru import logger

from bodybgk.equilibria import classify, critical_densities
from bodybgk.models import FlowOptions
from bodybgk.vonmises import DEFAULT_QUADRATURE


@pytest.fixture
def cfg():
    return DEFAULT_QUADRATURE


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def opts():
    return FlowOptions()


@pytest.fixture(scope="session")
def crit():
    return critical_densities(DEFAULT_QUADRATURE)


@pytest.fixture(scope="session")
def records_rho8():
    """ρ = 8 的平衡态，按分支名索引"""
    return {r.branch: r for r in classify(8.0, DEFAULT_QUADRATURE)}


@pytest.fixture(scope="session")
def rho_mid(crit):
    """双稳区 (ρ*, ρ_c) 的中点"""
    return 0.5 * (crit.rho_star + crit.rho_c)



@pytest.fixture
def warnings_logged():
    """收集 WARNING 及以上级别的 loguru 日志消息"""
    messages = []
    handler_id = logger.add(lambda m: messages.append(m.record["message"]), level="WARNING")
    yield messages
    logger.remove(handler_id)
