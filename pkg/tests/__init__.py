"""shardmap tests"""
