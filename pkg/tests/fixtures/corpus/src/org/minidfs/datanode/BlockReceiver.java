package org.minidfs.datanode;

import java.io.IOException;
import org.minidfs.protocol.Packet;
import org.minidfs.protocol.PacketReader;
import org.slf4j.Logger;
import org.slf4j.LoggerFactory;

public class BlockReceiver {
    private static final Logger LOG = LoggerFactory.getLogger(BlockReceiver.class);
    private final FsDataset dataset;
    private final PacketReader reader;

    public BlockReceiver(FsDataset dataset, PacketReader reader) {
        this.dataset = dataset;
        this.reader = reader;
    }

    public void receiveBlock(String blockId, String srcAddr, String destAddr) {
        LOG.info("Receiving block {} src: {} dest: {}", blockId, srcAddr, destAddr);
        try {
            Packet p = reader.next();
            while (!p.isLast()) {
                receivePacket(p);
                p = reader.next();
            }
            LOG.info("Received block {} of size {} from {}", blockId, p.getDataLen(), srcAddr);
        } catch (IOException e) {
            LOG.warn("Exception in receiveBlock for block {}: {}", blockId, e.getMessage());
        }
    }

    void receivePacket(Packet p) throws IOException {
        if (p.getDataLen() < 0) {
            throw new IOException("Invalid packet length");
        }
        LOG.debug("Receiving one packet for seqno {}", p.getSeqno());
    }
}
