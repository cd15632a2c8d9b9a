"""DiffMIA - 扩散模型成员推断攻击实验台."""

__version__ = "0.1.0"
__author__ = "DiffMIA Team"
