# 工具模块初始化文件
