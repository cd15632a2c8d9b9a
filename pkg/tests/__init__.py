"""测试模块."""
