"""系统共用的异常类型"""


class CcaValidationError(ValueError):
    """参数或前置条件不满足"""


class NumericalError(RuntimeError):
    """数值计算失败（本征分解、积分器、频谱峰值等）"""
