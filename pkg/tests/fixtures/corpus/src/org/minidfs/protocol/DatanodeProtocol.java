package org.minidfs.protocol;

public interface DatanodeProtocol {
    int OP_WRITE_BLOCK = 80;
    int OP_READ_BLOCK = 81;
    int OP_COPY_BLOCK = 84;

    void blockReceived(String blockId, long numBytes);

    String[] sendHeartbeat(String nodeId, long capacity);
}
