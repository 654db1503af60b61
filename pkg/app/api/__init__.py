# 命令处理模块初始化文件
